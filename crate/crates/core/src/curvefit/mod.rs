//! Lamina curve: outlier filtering, degree-5 fit, inflection points and
//! signed tangent angles.
//!
//! The curve is `y(z)`, depth as a function of longitudinal position, fitted
//! in a normalized abscissa on [-1, 1]. Angles are taken between tangent
//! lines at neighboring evaluation points (the inflection points of the fit,
//! or the domain ends when fewer than two inflections exist). A pair angle is
//! the caudal tangent angle minus the cranial one, which is positive for a
//! lordotic curve (depth largest mid-span) and negative for a kyphotic one.

pub mod cubic;
pub mod dbscan;
pub mod polyfit;

use serde::Serialize;
use thiserror::Error;

use crate::corepoints::CorePoint;
pub use dbscan::{dbscan_filter, DbscanOutcome, DbscanParams};
pub use polyfit::Normalization;

pub const DEGREE: usize = 5;
/// Three samples per fitted coefficient.
pub const MIN_FIT_POINTS: usize = 3 * (DEGREE + 1);
/// Half-width (normalized abscissa) of the sign-change check around a root of y''.
pub const INFLECTION_PROBE: f64 = 1e-6;
const MIN_DOMAIN_MM: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CurveError {
    #[error("invalid DBSCAN parameters {0:?}: eps must be > 0 and min_pts >= 1")]
    DbscanParams(DbscanParams),
    #[error("all {points} core points were classified as noise")]
    AllNoise { points: usize },
    #[error("{found} points, at least {required} needed for the fit")]
    TooFewPoints { found: usize, required: usize },
    #[error("least-squares system is rank deficient (abscissae not distinct enough)")]
    RankDeficient,
    #[error("fit domain [{z_min}, {z_max}] mm is degenerate")]
    DegenerateDomain { z_min: f64, z_max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaminaCurve {
    /// Ascending-power coefficients in the normalized abscissa.
    pub coeffs: [f64; DEGREE + 1],
    pub z_domain: [f64; 2],
    pub normalization: Normalization,
    /// Ascending, mm.
    pub inflections: Vec<f64>,
    /// Points where tangents are evaluated, cranial to caudal (descending z), mm.
    pub evaluation_points: Vec<f64>,
    /// Tangent angle `atan(dy/dz)` in degrees at each evaluation point.
    pub tangent_angles_deg: Vec<f64>,
    /// `tangent[k + 1] - tangent[k]` for neighboring evaluation points.
    pub pair_angles_deg: Vec<f64>,
    pub reported_angle_deg: Option<f64>,
}

impl LaminaCurve {
    /// A curve with the given normalized-basis coefficients over `[z_min, z_max]`.
    pub fn from_coeffs(coeffs: [f64; DEGREE + 1], z_min: f64, z_max: f64) -> Self {
        Self {
            coeffs,
            z_domain: [z_min, z_max],
            normalization: Normalization::from_domain(z_min, z_max),
            inflections: Vec::new(),
            evaluation_points: Vec::new(),
            tangent_angles_deg: Vec::new(),
            pair_angles_deg: Vec::new(),
            reported_angle_deg: None,
        }
    }

    /// Depth at `z_mm`.
    pub fn eval(&self, z_mm: f64) -> f64 {
        polyfit::eval(&self.coeffs, self.normalization.to_unit(z_mm))
    }

    /// `dy/dz` in mm/mm at `z_mm`.
    pub fn slope(&self, z_mm: f64) -> f64 {
        let d = polyfit::derivative(&self.coeffs);
        polyfit::eval(&d, self.normalization.to_unit(z_mm)) / self.normalization.half_width
    }

    /// Second derivative with respect to the normalized abscissa.
    pub fn second_derivative_unit(&self, t: f64) -> f64 {
        let d2 = polyfit::derivative(&polyfit::derivative(&self.coeffs));
        polyfit::eval(&d2, t)
    }

    pub fn report(&self, kept: usize, noise: usize) -> CurveReport {
        CurveReport {
            coeffs: self.coeffs,
            normalization: self.normalization,
            z_domain: self.z_domain,
            inflections_mm: self.inflections.clone(),
            evaluation_points_mm: self.evaluation_points.clone(),
            tangent_angles_deg: self.tangent_angles_deg.clone(),
            pair_angles_deg: self.pair_angles_deg.clone(),
            reported_angle_deg: self.reported_angle_deg,
            kept_points: kept,
            noise_points: noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveReport {
    pub coeffs: [f64; DEGREE + 1],
    pub normalization: Normalization,
    pub z_domain: [f64; 2],
    pub inflections_mm: Vec<f64>,
    pub evaluation_points_mm: Vec<f64>,
    pub tangent_angles_deg: Vec<f64>,
    pub pair_angles_deg: Vec<f64>,
    pub reported_angle_deg: Option<f64>,
    pub kept_points: usize,
    pub noise_points: usize,
}

/// Degree-5 least-squares fit of `y(z)` over `(z_mm, y_mm)` samples.
pub fn fit_samples(samples: &[(f64, f64)]) -> Result<LaminaCurve, CurveError> {
    if samples.len() < MIN_FIT_POINTS {
        return Err(CurveError::TooFewPoints {
            found: samples.len(),
            required: MIN_FIT_POINTS,
        });
    }
    let z_min = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let z_max = samples
        .iter()
        .map(|s| s.0)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(z_max > z_min) {
        return Err(CurveError::RankDeficient);
    }
    let norm = Normalization::from_domain(z_min, z_max);
    let t: Vec<f64> = samples.iter().map(|s| norm.to_unit(s.0)).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let c = polyfit::least_squares(&t, &y, DEGREE)?;
    let mut coeffs = [0.0; DEGREE + 1];
    coeffs.copy_from_slice(&c);
    Ok(LaminaCurve::from_coeffs(coeffs, z_min, z_max))
}

pub fn fit_polynomial(points: &[CorePoint]) -> Result<LaminaCurve, CurveError> {
    let samples: Vec<(f64, f64)> = points.iter().map(|p| (p.z_mm, p.y_mm)).collect();
    fit_samples(&samples)
}

/// Sign changes of `y''` strictly inside the domain, in mm, ascending.
pub fn find_inflections(curve: &LaminaCurve) -> Vec<f64> {
    let c = &curve.coeffs;
    // y'' = 20 c5 t^3 + 12 c4 t^2 + 6 c3 t + 2 c2
    let roots = cubic::real_roots(20.0 * c[5], 12.0 * c[4], 6.0 * c[3], 2.0 * c[2]);
    let mut out: Vec<f64> = roots
        .into_iter()
        .filter(|&t| t > -1.0 && t < 1.0)
        .filter(|&t| {
            let lo = curve.second_derivative_unit(t - INFLECTION_PROBE);
            let hi = curve.second_derivative_unit(t + INFLECTION_PROBE);
            (lo < 0.0 && hi > 0.0) || (lo > 0.0 && hi < 0.0)
        })
        .map(|t| curve.normalization.to_mm(t))
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

pub fn tangent_angle_deg(slope: f64) -> f64 {
    slope.atan().to_degrees()
}

/// Locates inflections (if not already done) and fills in tangent and pair angles.
pub fn measure_angles(mut curve: LaminaCurve) -> Result<LaminaCurve, CurveError> {
    let [z_min, z_max] = curve.z_domain;
    if !(z_max - z_min >= MIN_DOMAIN_MM) {
        return Err(CurveError::DegenerateDomain { z_min, z_max });
    }
    curve.inflections = find_inflections(&curve);
    let mut points = curve.inflections.clone();
    if points.len() < 2 {
        points.push(z_min);
        points.push(z_max);
    }
    points.sort_by(|a, b| b.total_cmp(a));
    let tangents: Vec<f64> = points
        .iter()
        .map(|&z| tangent_angle_deg(curve.slope(z)))
        .collect();
    let pairs: Vec<f64> = tangents.windows(2).map(|w| w[1] - w[0]).collect();
    let reported = pairs
        .iter()
        .copied()
        .fold(None, |best: Option<f64>, a| match best {
            Some(b) if b.abs() >= a.abs() => Some(b),
            _ => Some(a),
        });
    curve.evaluation_points = points;
    curve.tangent_angles_deg = tangents;
    curve.pair_angles_deg = pairs;
    curve.reported_angle_deg = reported;
    Ok(curve)
}

/// Everything for one side: filter, fit, measure.
#[derive(Debug, Clone, PartialEq)]
pub struct SideCurve {
    pub filtered: DbscanOutcome,
    pub curve: LaminaCurve,
}

impl SideCurve {
    pub fn reported_angle_deg(&self) -> f64 {
        self.curve.reported_angle_deg.unwrap_or(0.0)
    }
}

pub fn analyze_side(points: &[CorePoint], params: DbscanParams) -> Result<SideCurve, CurveError> {
    let filtered = dbscan_filter(points, params)?;
    let curve = measure_angles(fit_polynomial(&filtered.kept)?)?;
    Ok(SideCurve { filtered, curve })
}
