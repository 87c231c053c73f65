//! Density clustering of core points in the sagittal `(z, y)` plane.
//!
//! Points are visited in lexicographic `(z, y, source_frame)` order. Core
//! points (at least `min_pts` points, self included, within `eps`) are grouped
//! into clusters numbered by their lowest-ordered member; a border point joins
//! the cluster of the lowest-ordered core point within `eps` of it. Everything
//! else is noise.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::CurveError;
use crate::corepoints::CorePoint;

pub const DEFAULT_EPS_MM: f64 = 4.0;
pub const DEFAULT_MIN_PTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_pts: usize,
}

impl Default for DbscanParams {
    fn default() -> Self {
        Self {
            eps: DEFAULT_EPS_MM,
            min_pts: DEFAULT_MIN_PTS,
        }
    }
}

impl DbscanParams {
    pub fn validate(&self) -> Result<(), CurveError> {
        if !(self.eps > 0.0 && self.eps.is_finite()) || self.min_pts < 1 {
            return Err(CurveError::DbscanParams(*self));
        }
        Ok(())
    }
}

/// Cluster label of each input point, `None` for noise. Labels are numbered
/// from 0 in processing order. `keys` breaks ties between coincident points.
pub fn cluster_labels(
    points: &[[f64; 2]],
    keys: &[u32],
    params: DbscanParams,
) -> Vec<Option<usize>> {
    let n = points.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        points[a][0]
            .total_cmp(&points[b][0])
            .then(points[a][1].total_cmp(&points[b][1]))
            .then(keys[a].cmp(&keys[b]))
            .then(a.cmp(&b))
    });
    let sorted: Vec<[f64; 2]> = order.iter().map(|&i| points[i]).collect();
    let eps2 = params.eps * params.eps;

    // Sorted by z, so neighbors of k lie in a contiguous window around it.
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|k| {
            let z = sorted[k][0];
            let lo = sorted.partition_point(|p| p[0] < z - params.eps);
            let mut out = Vec::new();
            for (j, p) in sorted.iter().enumerate().skip(lo) {
                if p[0] > z + params.eps {
                    break;
                }
                let (dz, dy) = (p[0] - z, p[1] - sorted[k][1]);
                if dz * dz + dy * dy <= eps2 {
                    out.push(j);
                }
            }
            out
        })
        .collect();
    let core: Vec<bool> = neighbors
        .iter()
        .map(|nb| nb.len() >= params.min_pts)
        .collect();

    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut next = 0;
    for start in 0..n {
        if !core[start] || label[start].is_some() {
            continue;
        }
        label[start] = Some(next);
        let mut stack = vec![start];
        while let Some(k) = stack.pop() {
            for &j in &neighbors[k] {
                if core[j] && label[j].is_none() {
                    label[j] = Some(next);
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    for k in 0..n {
        if !core[k] {
            // neighbor lists are ascending, so the first core neighbor is the lowest-ordered
            label[k] = neighbors[k]
                .iter()
                .find(|&&j| core[j])
                .and_then(|&j| label[j]);
        }
    }

    let mut out = vec![None; n];
    for (k, &i) in order.iter().enumerate() {
        out[i] = label[k];
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DbscanOutcome {
    /// Clustered points in processing order.
    pub kept: Vec<CorePoint>,
    pub noise: Vec<CorePoint>,
    pub cluster_count: usize,
}

fn point_order(a: &CorePoint, b: &CorePoint) -> Ordering {
    a.z_mm
        .total_cmp(&b.z_mm)
        .then(a.y_mm.total_cmp(&b.y_mm))
        .then(a.source_frame.cmp(&b.source_frame))
}

/// Splits `points` into clustered (kept) and noise points.
pub fn dbscan_filter(
    points: &[CorePoint],
    params: DbscanParams,
) -> Result<DbscanOutcome, CurveError> {
    params.validate()?;
    let xy: Vec<[f64; 2]> = points.iter().map(|p| [p.z_mm, p.y_mm]).collect();
    let keys: Vec<u32> = points.iter().map(|p| p.source_frame).collect();
    let labels = cluster_labels(&xy, &keys, params);
    let cluster_count = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let (mut kept, mut noise) = (Vec::new(), Vec::new());
    for (p, l) in points.iter().zip(&labels) {
        if l.is_some() {
            kept.push(*p);
        } else {
            noise.push(*p);
        }
    }
    kept.sort_by(point_order);
    noise.sort_by(point_order);
    if kept.is_empty() {
        return Err(CurveError::AllNoise {
            points: points.len(),
        });
    }
    Ok(DbscanOutcome {
        kept,
        noise,
        cluster_count,
    })
}
