//! Lamina-curve lordosis measurement from tracked 3D ultrasound.
//!
//! The pipeline stages are:
//!
//! 1. **Scan model** – manifest, pose table and raster ingestion ([`scan_model`]).
//! 2. **Reconstruction** – forward nearest-voxel compounding of tracked frames
//!    into an axis-aligned volume ([`reconstruction`]).
//! 3. **Key frames** – log-energy scoring of every sagittal slice and left/right
//!    key-frame selection ([`keyframe`]).
//! 4. **Core points** – per-frame intensity-weighted lamina centroids projected
//!    into the key planes ([`corepoints`]).
//! 5. **Curve fit** – DBSCAN outlier removal, degree-5 least squares, inflection
//!    points and signed tangent angles ([`curvefit`]).
//!
//! [`metrics`] carries the left/right agreement statistics and Dice overlap,
//! [`phantom`] generates synthetic scans with analytically known curves, and
//! [`pipeline`] chains the stages with operator-visible parameters.
//!
//! Axis convention used everywhere: x is lateral (left negative), y is depth
//! (posterior to anterior increasing), z is longitudinal (caudal to cranial).
//! All lengths are millimeters and all angles are degrees.

// `!(a > b)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corepoints;
pub mod curvefit;
pub mod keyframe;
pub mod metrics;
pub mod phantom;
pub mod pipeline;
pub mod reconstruction;
pub mod scan_model;

use serde::{Deserialize, Serialize};

/// Which side of the midline a key frame or core point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn as_str(&self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
