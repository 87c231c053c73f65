//! Left/right agreement statistics and Dice overlap.

use std::collections::HashSet;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scan_model::Raster;

/// Left/right differences above this (degrees) count as clinically large.
pub const CLINICAL_THRESHOLD_DEG: f64 = 5.0;

/// The 22 left/right lamina-curve angle pairs of the reference cohort.
pub const REFERENCE_TABLE_CSV: &str = include_str!("../data/reference_angles.csv");

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("angle table: {0}")]
    Csv(#[from] csv::Error),
    #[error("duplicate row label {0:?}")]
    DuplicateLabel(String),
    #[error("row {0:?} has a non-finite angle")]
    NonFinite(String),
    #[error("no row labelled {0:?}")]
    UnknownLabel(String),
    #[error("agreement needs at least 2 rows, found {0}")]
    TooFewRows(usize),
    #[error("{0} column has zero variance; correlation undefined")]
    ZeroVariance(&'static str),
    #[error("grid dimensions differ: {a:?} vs {b:?}")]
    DimensionMismatch {
        a: (usize, usize),
        b: (usize, usize),
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Healthy,
    LossOfLordosis,
    MimickedReversal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnglePair {
    pub label: String,
    pub status: Status,
    pub left_deg: f64,
    pub right_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnglePairTable {
    pub rows: Vec<AnglePair>,
}

impl AnglePairTable {
    pub fn new(rows: Vec<AnglePair>) -> Result<Self, MetricsError> {
        let mut seen = HashSet::new();
        for r in &rows {
            if !seen.insert(r.label.as_str()) {
                return Err(MetricsError::DuplicateLabel(r.label.clone()));
            }
            if !(r.left_deg.is_finite() && r.right_deg.is_finite()) {
                return Err(MetricsError::NonFinite(r.label.clone()));
            }
        }
        Ok(Self { rows })
    }

    /// CSV with header `label,status,left_deg,right_deg`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, MetricsError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let rows = rdr.deserialize().collect::<Result<Vec<AnglePair>, _>>()?;
        Self::new(rows)
    }

    pub fn reference() -> Self {
        Self::from_csv(REFERENCE_TABLE_CSV.as_bytes()).expect("bundled table parses")
    }

    pub fn to_csv(&self) -> Result<String, MetricsError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| csv::Error::from(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Copy of the table without the row labelled `label`.
    pub fn excluding(&self, label: &str) -> Result<Self, MetricsError> {
        if !self.rows.iter().any(|r| r.label == label) {
            return Err(MetricsError::UnknownLabel(label.to_string()));
        }
        Ok(Self {
            rows: self
                .rows
                .iter()
                .filter(|r| r.label != label)
                .cloned()
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport {
    pub n: usize,
    pub mad_deg: f64,
    /// Sample (n - 1) standard deviation of the absolute differences.
    pub sd_deg: f64,
    pub pearson_r: f64,
    pub abs_diff_deg: Vec<f64>,
    pub threshold_deg: f64,
    pub over_threshold: usize,
}

pub fn agreement(table: &AnglePairTable) -> Result<AgreementReport, MetricsError> {
    let n = table.len();
    if n < 2 {
        return Err(MetricsError::TooFewRows(n));
    }
    let nf = n as f64;
    let diffs: Vec<f64> = table
        .rows
        .iter()
        .map(|r| (r.left_deg - r.right_deg).abs())
        .collect();
    let mad = diffs.iter().sum::<f64>() / nf;
    let sd = (diffs.iter().map(|d| (d - mad).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();

    let ml = table.rows.iter().map(|r| r.left_deg).sum::<f64>() / nf;
    let mr = table.rows.iter().map(|r| r.right_deg).sum::<f64>() / nf;
    let (mut sll, mut srr, mut slr) = (0.0, 0.0, 0.0);
    for r in &table.rows {
        let (a, b) = (r.left_deg - ml, r.right_deg - mr);
        sll += a * a;
        srr += b * b;
        slr += a * b;
    }
    if sll == 0.0 {
        return Err(MetricsError::ZeroVariance("left"));
    }
    if srr == 0.0 {
        return Err(MetricsError::ZeroVariance("right"));
    }
    let r = (slr / (sll.sqrt() * srr.sqrt())).clamp(-1.0, 1.0);

    Ok(AgreementReport {
        n,
        mad_deg: mad,
        sd_deg: sd,
        pearson_r: r,
        over_threshold: diffs
            .iter()
            .filter(|&&d| d > CLINICAL_THRESHOLD_DEG)
            .count(),
        abs_diff_deg: diffs,
        threshold_deg: CLINICAL_THRESHOLD_DEG,
    })
}

/// Dice similarity `2|A∩B| / (|A| + |B|)` of two binary grids (nonzero is
/// foreground). Two empty grids score 1.
pub fn dice(a: &Raster, b: &Raster) -> Result<f64, MetricsError> {
    if a.dims() != b.dims() {
        return Err(MetricsError::DimensionMismatch {
            a: a.dims(),
            b: b.dims(),
        });
    }
    let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.data.iter().zip(&b.data) {
        let (x, y) = (x != 0, y != 0);
        na += x as usize;
        nb += y as usize;
        both += (x && y) as usize;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (na + nb) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(label: &str, l: f64, r: f64) -> AnglePair {
        AnglePair {
            label: label.into(),
            status: Status::Healthy,
            left_deg: l,
            right_deg: r,
        }
    }

    #[test]
    fn identical_columns() {
        let t = AnglePairTable::new(vec![
            row("a", 1.0, 1.0),
            row("b", 5.0, 5.0),
            row("c", -3.0, -3.0),
        ])
        .unwrap();
        let rep = agreement(&t).unwrap();
        assert_eq!(rep.mad_deg, 0.0);
        assert_eq!(rep.sd_deg, 0.0);
        assert!((rep.pearson_r - 1.0).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let one = AnglePairTable::new(vec![row("a", 1.0, 2.0)]).unwrap();
        assert!(matches!(agreement(&one), Err(MetricsError::TooFewRows(1))));
        let flat = AnglePairTable::new(vec![row("a", 1.0, 2.0), row("b", 1.0, 3.0)]).unwrap();
        assert!(matches!(
            agreement(&flat),
            Err(MetricsError::ZeroVariance("left"))
        ));
        assert!(matches!(
            AnglePairTable::new(vec![row("a", 1.0, 2.0), row("a", 1.0, 3.0)]),
            Err(MetricsError::DuplicateLabel(_))
        ));
        assert!(matches!(
            AnglePairTable::reference().excluding("XX999"),
            Err(MetricsError::UnknownLabel(_))
        ));
    }

    #[test]
    fn reference_table_loads() {
        let t = AnglePairTable::reference();
        assert_eq!(t.len(), 22);
        assert_eq!(t.rows[3].label, "HS004");
        assert_eq!(t.rows[21].left_deg, -14.0);
        assert_eq!(
            t.rows
                .iter()
                .filter(|r| r.status == Status::MimickedReversal)
                .count(),
            5
        );
        let again = AnglePairTable::from_csv(t.to_csv().unwrap().as_bytes()).unwrap();
        assert_eq!(again, t);
    }

    #[test]
    fn dice_cases() {
        let mut a = Raster::zeros(4, 4);
        let mut b = Raster::zeros(4, 4);
        assert_eq!(dice(&a, &b).unwrap(), 1.0);
        for k in 0..4 {
            a.data[k] = 1;
        }
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        for k in 8..12 {
            b.data[k] = 255;
        }
        assert_eq!(dice(&a, &b).unwrap(), 0.0);
        // |a| = |b| = 4 with 2 shared: 2*2 / 8
        let mut c = Raster::zeros(4, 4);
        for k in 2..6 {
            c.data[k] = 1;
        }
        assert_eq!(dice(&a, &c).unwrap(), 0.5);
        assert!(dice(&a, &Raster::zeros(2, 8)).is_err());
    }

    #[test]
    fn only_sample_sd_of_absolute_differences_matches_table() {
        let table = AnglePairTable::reference();
        let report = agreement(&table).unwrap();
        let n = report.n as f64;
        let spread = |v: &[f64], denom: f64| {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / denom).sqrt()
        };
        let signed: Vec<f64> = table
            .rows
            .iter()
            .map(|r| r.left_deg - r.right_deg)
            .collect();
        assert!((report.sd_deg - 3.432).abs() < 5e-4);
        assert!((spread(&report.abs_diff_deg, n) - 3.353).abs() < 5e-4);
        assert!((spread(&signed, n - 1.0) - 3.432).abs() > 0.1);
    }
}
