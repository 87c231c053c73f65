//! Forward projection of tracked frames into an axis-aligned voxel volume.
//!
//! Every pixel is mapped through its frame pose to world millimeters and then
//! to the nearest voxel center. Intensities compound by maximum, masks by
//! logical OR, and a per-voxel hit counter records coverage. All three
//! reductions are commutative, so the volume does not depend on frame order.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scan_model::{ScanDataset, TrackedFrame};

pub const DEFAULT_VOXEL_MM: f64 = 0.5;
pub const DEFAULT_FILL_RADIUS_MM: f64 = 1.0;

#[derive(Debug, Error)]
pub enum ReconError {
    #[error("dataset has no frames")]
    EmptyDataset,
    #[error("voxel spacing {0:?} must be finite and > 0 in every axis")]
    Spacing([f64; 3]),
    #[error("frame {frame} pixel ({col}, {row}) projects outside the volume geometry")]
    OutsideGeometry { frame: u32, col: usize, row: usize },
    #[error("volume export to {path}: {source}")]
    Export {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Voxel grid placement. `origin` is the world position of the center of
/// voxel `(0, 0, 0)`; x is lateral, y depth, z longitudinal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeGeometry {
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub dims: [usize; 3],
}

impl VolumeGeometry {
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear index, x fastest.
    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (iz * self.dims[1] + iy) * self.dims[0] + ix
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let ix = idx % self.dims[0];
        let rest = idx / self.dims[0];
        [ix, rest % self.dims[1], rest / self.dims[1]]
    }

    pub fn center(&self, ix: usize, iy: usize, iz: usize) -> [f64; 3] {
        [
            self.origin[0] + ix as f64 * self.spacing[0],
            self.origin[1] + iy as f64 * self.spacing[1],
            self.origin[2] + iz as f64 * self.spacing[2],
        ]
    }

    pub fn lateral_mm(&self, ix: usize) -> f64 {
        self.origin[0] + ix as f64 * self.spacing[0]
    }

    /// Nearest voxel to a world point, or `None` outside the grid.
    pub fn nearest_voxel(&self, p: [f64; 3]) -> Option<[usize; 3]> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.spacing[a]).round();
            if !(f >= 0.0 && f < self.dims[a] as f64) {
                return None;
            }
            out[a] = f as usize;
        }
        Some(out)
    }
}

/// Reconstructed volume. Channels are stored x-fastest, see [`VolumeGeometry::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub geometry: VolumeGeometry,
    pub intensity: Vec<u8>,
    /// 0 or 1.
    pub bone: Vec<u8>,
    pub hit_count: Vec<u32>,
    /// Set for voxels whose values came from hole filling rather than a pixel hit.
    pub filled: Vec<bool>,
}

impl Volume {
    pub fn empty(geometry: VolumeGeometry) -> Self {
        let n = geometry.len();
        Self {
            geometry,
            intensity: vec![0; n],
            bone: vec![0; n],
            hit_count: vec![0; n],
            filled: vec![false; n],
        }
    }

    pub fn bone_voxel_count(&self) -> usize {
        self.bone.iter().filter(|&&b| b != 0).count()
    }

    /// Raw little-endian dump plus a JSON geometry sidecar: `<stem>.raw` holds
    /// the intensity (u8), bone (u8) and hit_count (u32 LE) channels back to back.
    pub fn export(&self, dir: &Path, stem: &str) -> Result<(), ReconError> {
        let raw_path = dir.join(format!("{stem}.raw"));
        let export_err = |path: &Path| {
            let path = path.display().to_string();
            move |source| ReconError::Export { path, source }
        };
        let file = fs::File::create(&raw_path).map_err(export_err(&raw_path))?;
        let mut out = BufWriter::new(file);
        out.write_all(&self.intensity)
            .map_err(export_err(&raw_path))?;
        out.write_all(&self.bone).map_err(export_err(&raw_path))?;
        for h in &self.hit_count {
            out.write_all(&h.to_le_bytes())
                .map_err(export_err(&raw_path))?;
        }
        out.flush().map_err(export_err(&raw_path))?;

        let n = self.geometry.len();
        let sidecar = VolumeSidecar {
            raw_file: format!("{stem}.raw"),
            origin: self.geometry.origin,
            spacing: self.geometry.spacing,
            dims: self.geometry.dims,
            layout: "x-fastest",
            channels: vec![
                ChannelInfo {
                    name: "intensity",
                    dtype: "u8",
                    offset_bytes: 0,
                },
                ChannelInfo {
                    name: "bone",
                    dtype: "u8",
                    offset_bytes: n,
                },
                ChannelInfo {
                    name: "hit_count",
                    dtype: "u32le",
                    offset_bytes: 2 * n,
                },
            ],
        };
        let json_path = dir.join(format!("{stem}.json"));
        let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
        fs::write(&json_path, json + "\n").map_err(export_err(&json_path))
    }
}

#[derive(Debug, Serialize)]
struct ChannelInfo {
    name: &'static str,
    dtype: &'static str,
    offset_bytes: usize,
}

#[derive(Debug, Serialize)]
struct VolumeSidecar {
    raw_file: String,
    origin: [f64; 3],
    spacing: [f64; 3],
    dims: [usize; 3],
    layout: &'static str,
    channels: Vec<ChannelInfo>,
}

/// Axis-aligned hull of every frame's corner pixels, padded by one voxel on each side.
pub fn plan_geometry(ds: &ScanDataset, spacing: [f64; 3]) -> Result<VolumeGeometry, ReconError> {
    if !spacing.iter().all(|s| s.is_finite() && *s > 0.0) {
        return Err(ReconError::Spacing(spacing));
    }
    if ds.frames.is_empty() {
        return Err(ReconError::EmptyDataset);
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for frame in &ds.frames {
        for c in frame.corners_world() {
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
        }
    }
    let mut origin = [0.0; 3];
    let mut dims = [0usize; 3];
    for a in 0..3 {
        let cells = ((hi[a] - lo[a]) / spacing[a] - 1e-9).ceil().max(0.0) as usize;
        dims[a] = cells + 3;
        origin[a] = lo[a] - spacing[a];
    }
    Ok(VolumeGeometry {
        origin,
        spacing,
        dims,
    })
}

/// Precomputed affine map from pixel `(col, row)` to fractional voxel coordinates.
struct PixelMap {
    base: [f64; 3],
    per_col: [f64; 3],
    per_row: [f64; 3],
}

impl PixelMap {
    fn new(frame: &TrackedFrame, geom: &VolumeGeometry) -> Self {
        let m = frame.pose.orientation.to_matrix();
        let [sw, sh] = frame.pixel_spacing;
        let mut base = [0.0; 3];
        let mut per_col = [0.0; 3];
        let mut per_row = [0.0; 3];
        for a in 0..3 {
            base[a] = (frame.pose.position[a] - geom.origin[a]) / geom.spacing[a];
            per_col[a] = m[a][0] * sw / geom.spacing[a];
            per_row[a] = m[a][1] * sh / geom.spacing[a];
        }
        Self {
            base,
            per_col,
            per_row,
        }
    }

    #[inline]
    fn voxel(&self, col: usize, row: usize, dims: &[usize; 3]) -> Option<[usize; 3]> {
        let (c, r) = (col as f64, row as f64);
        let mut out = [0usize; 3];
        for a in 0..3 {
            let f = (self.base[a] + c * self.per_col[a] + r * self.per_row[a]).round();
            if !(f >= 0.0 && f < dims[a] as f64) {
                return None;
            }
            out[a] = f as usize;
        }
        Some(out)
    }
}

fn project_frame(vol: &mut Volume, frame: &TrackedFrame) -> Result<(), ReconError> {
    let geom = vol.geometry;
    let map = PixelMap::new(frame, &geom);
    for row in 0..frame.height() {
        for col in 0..frame.width() {
            let [ix, iy, iz] =
                map.voxel(col, row, &geom.dims)
                    .ok_or(ReconError::OutsideGeometry {
                        frame: frame.index,
                        col,
                        row,
                    })?;
            let idx = geom.index(ix, iy, iz);
            let value = frame.intensity.get(col, row);
            if value > vol.intensity[idx] {
                vol.intensity[idx] = value;
            }
            vol.bone[idx] |= frame.mask.get(col, row);
            vol.hit_count[idx] += 1;
        }
    }
    Ok(())
}

/// Compounds every frame of `ds` into a fresh volume on `geom`.
pub fn compound(ds: &ScanDataset, geom: &VolumeGeometry) -> Result<Volume, ReconError> {
    let mut vol = Volume::empty(*geom);
    for frame in &ds.frames {
        project_frame(&mut vol, frame)?;
    }
    Ok(vol)
}

/// Fills unhit voxels lying between the first and last hit voxel of their
/// z-column with the values of the nearest hit voxel within `radius_mm`.
/// Equidistant candidates resolve to the brightest one.
pub fn fill_holes(vol: &Volume, radius_mm: f64) -> Volume {
    let mut out = vol.clone();
    if !(radius_mm > 0.0) {
        return out;
    }
    let geom = vol.geometry;
    let [nx, ny, nz] = geom.dims;
    let reach: [i64; 3] = std::array::from_fn(|a| (radius_mm / geom.spacing[a]).floor() as i64);

    let mut offsets: Vec<(f64, [i64; 3])> = Vec::new();
    for dz in -reach[2]..=reach[2] {
        for dy in -reach[1]..=reach[1] {
            for dx in -reach[0]..=reach[0] {
                if dx == 0 && dy == 0 && dz == 0 {
                    continue;
                }
                let d2 = (dx as f64 * geom.spacing[0]).powi(2)
                    + (dy as f64 * geom.spacing[1]).powi(2)
                    + (dz as f64 * geom.spacing[2]).powi(2);
                if d2 <= radius_mm * radius_mm + 1e-12 {
                    offsets.push((d2, [dx, dy, dz]));
                }
            }
        }
    }
    offsets.sort_by(|a, b| a.0.total_cmp(&b.0));
    if offsets.is_empty() {
        return out;
    }

    for iy in 0..ny {
        for ix in 0..nx {
            let hits = (0..nz).filter(|&iz| vol.hit_count[geom.index(ix, iy, iz)] > 0);
            let (Some(first), Some(last)) = (hits.clone().next(), hits.clone().next_back()) else {
                continue;
            };
            for iz in first + 1..last {
                let idx = geom.index(ix, iy, iz);
                if vol.hit_count[idx] > 0 {
                    continue;
                }
                let mut best: Option<(f64, u8, u8)> = None;
                for &(d2, [dx, dy, dz]) in &offsets {
                    if let Some((bd, _, _)) = best {
                        if d2 > bd + 1e-12 {
                            break;
                        }
                    }
                    let (x, y, z) = (ix as i64 + dx, iy as i64 + dy, iz as i64 + dz);
                    if x < 0 || y < 0 || z < 0 || x >= nx as i64 || y >= ny as i64 || z >= nz as i64
                    {
                        continue;
                    }
                    let n = geom.index(x as usize, y as usize, z as usize);
                    if vol.hit_count[n] == 0 {
                        continue;
                    }
                    let cand = (d2, vol.intensity[n], vol.bone[n]);
                    best = Some(match best {
                        Some(b) if (b.1, b.2) >= (cand.1, cand.2) => b,
                        _ => cand,
                    });
                }
                if let Some((_, value, bone)) = best {
                    out.intensity[idx] = value;
                    out.bone[idx] = bone;
                    out.filled[idx] = true;
                }
            }
        }
    }
    out
}
