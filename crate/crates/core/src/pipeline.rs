//! End-to-end measurement: reconstruct, select key frames, extract core
//! points, then filter, fit and measure each side.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corepoints::{extract_core_points, CorePoint, CorePointError, DEFAULT_BAND_MM};
use crate::curvefit::dbscan::{DEFAULT_EPS_MM, DEFAULT_MIN_PTS};
use crate::curvefit::{analyze_side, CurveError, CurveReport, DbscanParams, SideCurve};
use crate::keyframe::{
    select_key_frames, KeyFrame, KeyFrameError, KeyFrameReport, DEFAULT_MARGIN_MM,
};
use crate::reconstruction::{
    compound, fill_holes, plan_geometry, ReconError, Volume, VolumeGeometry,
    DEFAULT_FILL_RADIUS_MM, DEFAULT_VOXEL_MM,
};
use crate::scan_model::{validate_dataset, ScanDataset};
use crate::Side;

/// Every operator-tunable constant of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureParams {
    pub voxel_mm: f64,
    pub margin_mm: f64,
    pub band_mm: f64,
    pub eps_mm: f64,
    pub min_pts: usize,
    pub fill_mm: f64,
}

impl Default for MeasureParams {
    fn default() -> Self {
        Self {
            voxel_mm: DEFAULT_VOXEL_MM,
            margin_mm: DEFAULT_MARGIN_MM,
            band_mm: DEFAULT_BAND_MM,
            eps_mm: DEFAULT_EPS_MM,
            min_pts: DEFAULT_MIN_PTS,
            fill_mm: DEFAULT_FILL_RADIUS_MM,
        }
    }
}

impl MeasureParams {
    pub fn dbscan(&self) -> DbscanParams {
        DbscanParams {
            eps: self.eps_mm,
            min_pts: self.min_pts,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("reconstruction: {0}")]
    Reconstruction(#[from] ReconError),
    #[error("key frames: {0}")]
    KeyFrame(#[from] KeyFrameError),
    #[error("core points: {0}")]
    CorePoints(#[from] CorePointError),
    #[error("{side} curve: {source}")]
    Curve {
        side: Side,
        #[source]
        source: CurveError,
    },
}

impl PipelineError {
    pub fn side(&self) -> Option<Side> {
        match self {
            PipelineError::Curve { side, .. } => Some(*side),
            PipelineError::KeyFrame(KeyFrameError::NoCandidate { side, .. }) => Some(*side),
            PipelineError::CorePoints(CorePointError::NoPoints { side }) => Some(*side),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SideMeasurement {
    pub key_frame: KeyFrame,
    pub core_points: Vec<CorePoint>,
    pub result: SideCurve,
}

impl SideMeasurement {
    pub fn reported_angle_deg(&self) -> f64 {
        self.result.reported_angle_deg()
    }
}

#[derive(Debug, Clone)]
pub struct Measurement {
    pub params: MeasureParams,
    pub volume: Volume,
    pub midline_mm: f64,
    pub left: SideMeasurement,
    pub right: SideMeasurement,
    pub warnings: Vec<String>,
}

impl Measurement {
    pub fn side(&self, side: Side) -> &SideMeasurement {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn report(&self, subject_id: &str) -> MeasurementReport {
        let side = |s: &SideMeasurement| SideReport {
            reported_angle_deg: s.result.curve.reported_angle_deg,
            key_frame: s.key_frame.report(),
            core_points: s.core_points.len(),
            curve: s
                .result
                .curve
                .report(s.result.filtered.kept.len(), s.result.filtered.noise.len()),
        };
        MeasurementReport {
            subject_id: subject_id.to_string(),
            units: Units {
                length: "mm",
                angle: "deg",
            },
            params: self.params,
            geometry: self.volume.geometry,
            midline_mm: self.midline_mm,
            left: side(&self.left),
            right: side(&self.right),
            warnings: self.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Units {
    pub length: &'static str,
    pub angle: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct SideReport {
    pub reported_angle_deg: Option<f64>,
    pub key_frame: KeyFrameReport,
    pub core_points: usize,
    pub curve: CurveReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeasurementReport {
    pub subject_id: String,
    pub units: Units,
    pub params: MeasureParams,
    pub geometry: VolumeGeometry,
    pub midline_mm: f64,
    pub left: SideReport,
    pub right: SideReport,
    pub warnings: Vec<String>,
}

pub fn reconstruct(ds: &ScanDataset, params: &MeasureParams) -> Result<Volume, PipelineError> {
    let geom = plan_geometry(ds, [params.voxel_mm; 3])?;
    log::info!(
        "compounding {} frames into {:?} voxels",
        ds.frame_count(),
        geom.dims
    );
    let vol = compound(ds, &geom)?;
    Ok(fill_holes(&vol, params.fill_mm))
}

pub fn measure(ds: &ScanDataset, params: &MeasureParams) -> Result<Measurement, PipelineError> {
    let volume = reconstruct(ds, params)?;
    let midline_mm = crate::keyframe::find_midline(&volume)?;
    let (left_kf, right_kf) = select_key_frames(&volume, params.margin_mm)?;
    log::info!(
        "midline {midline_mm:.2} mm, key planes {:.2} / {:.2} mm",
        left_kf.lateral_mm(),
        right_kf.lateral_mm()
    );
    let (left_pts, right_pts) = extract_core_points(ds, &left_kf, &right_kf, params.band_mm)?;
    log::info!(
        "core points: {} left, {} right",
        left_pts.len(),
        right_pts.len()
    );
    let dbscan = params.dbscan();
    let left = analyze_side(&left_pts, dbscan).map_err(|source| PipelineError::Curve {
        side: Side::Left,
        source,
    })?;
    let right = analyze_side(&right_pts, dbscan).map_err(|source| PipelineError::Curve {
        side: Side::Right,
        source,
    })?;
    Ok(Measurement {
        params: *params,
        volume,
        midline_mm,
        left: SideMeasurement {
            key_frame: left_kf,
            core_points: left_pts,
            result: left,
        },
        right: SideMeasurement {
            key_frame: right_kf,
            core_points: right_pts,
            result: right,
        },
        warnings: validate_dataset(ds),
    })
}
