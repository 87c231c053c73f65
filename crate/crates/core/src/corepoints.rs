//! Lamina core points: one intensity-weighted centroid per transverse frame
//! and side, projected onto the key sagittal plane by dropping the lateral
//! coordinate.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::keyframe::KeyFrame;
use crate::scan_model::{ScanDataset, TrackedFrame};
use crate::Side;

pub const DEFAULT_BAND_MM: f64 = 4.0;

#[derive(Debug, Error)]
pub enum CorePointError {
    #[error("band half-width {0} mm must be finite and > 0")]
    Band(f64),
    #[error("no {side} core points: no mask pixels within the lamina band of any frame")]
    NoPoints { side: Side },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorePoint {
    pub z_mm: f64,
    pub y_mm: f64,
    pub source_frame: u32,
    pub side: Side,
    /// Summed intensity of the contributing pixels.
    pub weight: f64,
}

#[derive(Default)]
struct Accum {
    w: f64,
    wy: f64,
    wz: f64,
}

impl Accum {
    fn point(&self, frame: u32, side: Side) -> Option<CorePoint> {
        (self.w > 0.0).then(|| CorePoint {
            z_mm: self.wz / self.w,
            y_mm: self.wy / self.w,
            source_frame: frame,
            side,
            weight: self.w,
        })
    }
}

/// Centroids of the mask pixels of one frame whose world lateral coordinate
/// lies within `band_mm` of each plane in `planes_mm`.
fn frame_centroids(
    frame: &TrackedFrame,
    planes_mm: &[(Side, f64)],
    band_mm: f64,
) -> Vec<CorePoint> {
    let m = frame.pose.orientation.to_matrix();
    let t = frame.pose.position;
    let [sw, sh] = frame.pixel_spacing;
    let mut acc: Vec<Accum> = planes_mm.iter().map(|_| Accum::default()).collect();
    for row in 0..frame.height() {
        let v = row as f64 * sh;
        for col in 0..frame.width() {
            if frame.mask.get(col, row) == 0 {
                continue;
            }
            let u = col as f64 * sw;
            let x = t[0] + m[0][0] * u + m[0][1] * v;
            let y = t[1] + m[1][0] * u + m[1][1] * v;
            let z = t[2] + m[2][0] * u + m[2][1] * v;
            let w = frame.intensity.get(col, row) as f64;
            for (a, &(_, plane)) in acc.iter_mut().zip(planes_mm) {
                if (x - plane).abs() <= band_mm {
                    a.w += w;
                    a.wy += w * y;
                    a.wz += w * z;
                }
            }
        }
    }
    acc.iter()
        .zip(planes_mm)
        .filter_map(|(a, &(side, _))| a.point(frame.index, side))
        .collect()
}

/// Core points for one lateral plane. Frames with no in-band bone contribute nothing.
pub fn extract_side(ds: &ScanDataset, side: Side, lateral_mm: f64, band_mm: f64) -> Vec<CorePoint> {
    ds.frames
        .iter()
        .flat_map(|f| frame_centroids(f, &[(side, lateral_mm)], band_mm))
        .collect()
}

/// Left and right core points, ordered by source frame.
pub fn extract_core_points(
    ds: &ScanDataset,
    left: &KeyFrame,
    right: &KeyFrame,
    band_mm: f64,
) -> Result<(Vec<CorePoint>, Vec<CorePoint>), CorePointError> {
    if !(band_mm > 0.0 && band_mm.is_finite()) {
        return Err(CorePointError::Band(band_mm));
    }
    let planes = [
        (Side::Left, left.lateral_mm()),
        (Side::Right, right.lateral_mm()),
    ];
    let (mut l, mut r) = (Vec::new(), Vec::new());
    for frame in &ds.frames {
        for p in frame_centroids(frame, &planes, band_mm) {
            match p.side {
                Side::Left => l.push(p),
                Side::Right => r.push(p),
            }
        }
    }
    if l.is_empty() {
        return Err(CorePointError::NoPoints { side: Side::Left });
    }
    if r.is_empty() {
        return Err(CorePointError::NoPoints { side: Side::Right });
    }
    Ok((l, r))
}

/// CSV with columns `side,source_frame,z_mm,y_mm,weight`.
pub fn write_csv<W: Write>(out: W, points: &[CorePoint]) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["side", "source_frame", "z_mm", "y_mm", "weight"])?;
    for p in points {
        writer.write_record([
            p.side.as_str().to_string(),
            p.source_frame.to_string(),
            p.z_mm.to_string(),
            p.y_mm.to_string(),
            p.weight.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
