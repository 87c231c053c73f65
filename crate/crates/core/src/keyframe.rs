//! Key sagittal frame selection.
//!
//! Each sagittal slice (fixed lateral voxel index) is scored as
//! `ln(sum of per-row bone maxima) * effective rows`, where an effective row is
//! a z-row holding at least one bone voxel. Slice length enters linearly and
//! brightness only logarithmically, so a long dim bone track outranks a short
//! bright one. The best slice on each side of the midline becomes a key frame.

use serde::Serialize;
use thiserror::Error;

use crate::reconstruction::Volume;
use crate::Side;

pub const DEFAULT_MARGIN_MM: f64 = 5.0;

#[derive(Debug, Error)]
pub enum KeyFrameError {
    #[error("volume has no bone voxels")]
    NoBone,
    #[error("margin {0} mm must be finite and >= 0")]
    Margin(f64),
    #[error("no {side} slice with bone beyond the {margin_mm} mm midline margin")]
    NoCandidate { side: Side, margin_mm: f64 },
}

/// One lateral plane of the volume. Grids are `nz x ny`, row `z`, column `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct SagittalSlice {
    pub lateral_index: usize,
    pub lateral_mm: f64,
    pub nz: usize,
    pub ny: usize,
    pub intensity: Vec<u8>,
    pub bone: Vec<u8>,
}

impl SagittalSlice {
    pub fn from_volume(vol: &Volume, ix: usize) -> Self {
        let g = &vol.geometry;
        let [_, ny, nz] = g.dims;
        let mut intensity = Vec::with_capacity(ny * nz);
        let mut bone = Vec::with_capacity(ny * nz);
        for iz in 0..nz {
            for iy in 0..ny {
                let idx = g.index(ix, iy, iz);
                intensity.push(vol.intensity[idx]);
                bone.push(vol.bone[idx]);
            }
        }
        Self {
            lateral_index: ix,
            lateral_mm: g.lateral_mm(ix),
            nz,
            ny,
            intensity,
            bone,
        }
    }
}

/// Slice energy and the quantities it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceWeight {
    pub weight: f64,
    pub len_rows: usize,
    pub row_maxima: Vec<u8>,
}

impl SliceWeight {
    /// Returns `None` when there are no effective rows or their maxima sum to zero.
    pub fn from_row_maxima(row_maxima: Vec<u8>) -> Option<Self> {
        let len_rows = row_maxima.len();
        let sum: u64 = row_maxima.iter().map(|&m| m as u64).sum();
        if len_rows == 0 || sum == 0 {
            return None;
        }
        Some(Self {
            weight: (sum as f64).ln() * len_rows as f64,
            len_rows,
            row_maxima,
        })
    }
}

/// Row-maxima energy of one slice; `None` is the "no bone" sentinel.
pub fn slice_weight(slice: &SagittalSlice) -> Option<SliceWeight> {
    let row_maxima = (0..slice.nz)
        .filter_map(|iz| {
            let row = iz * slice.ny..(iz + 1) * slice.ny;
            slice.bone[row.clone()]
                .iter()
                .zip(&slice.intensity[row])
                .filter(|(&b, _)| b != 0)
                .map(|(_, &v)| v)
                .max()
        })
        .collect();
    SliceWeight::from_row_maxima(row_maxima)
}

/// Weight of every lateral slice, computed straight from the volume.
pub fn slice_weights(vol: &Volume) -> Vec<Option<SliceWeight>> {
    let g = &vol.geometry;
    let [nx, ny, nz] = g.dims;
    let mut maxima: Vec<Vec<u8>> = vec![Vec::new(); nx];
    let mut row_max: Vec<Option<u8>> = vec![None; nx];
    for iz in 0..nz {
        row_max.iter_mut().for_each(|m| *m = None);
        for iy in 0..ny {
            let base = g.index(0, iy, iz);
            let row = base..base + nx;
            for ((m, &b), &v) in row_max
                .iter_mut()
                .zip(&vol.bone[row.clone()])
                .zip(&vol.intensity[row])
            {
                if b != 0 {
                    *m = Some(m.map_or(v, |cur| cur.max(v)));
                }
            }
        }
        for (ix, m) in row_max.iter().enumerate() {
            if let Some(v) = m {
                maxima[ix].push(*v);
            }
        }
    }
    maxima
        .into_iter()
        .map(SliceWeight::from_row_maxima)
        .collect()
}

/// Intensity-weighted lateral centroid of the bone voxels, in mm.
/// Falls back to the unweighted centroid when every bone voxel is black.
pub fn find_midline(vol: &Volume) -> Result<f64, KeyFrameError> {
    let g = &vol.geometry;
    let (mut wsum, mut wx, mut count, mut xsum) = (0.0f64, 0.0f64, 0usize, 0.0f64);
    for (idx, (&b, &v)) in vol.bone.iter().zip(&vol.intensity).enumerate() {
        if b == 0 {
            continue;
        }
        let x = g.lateral_mm(idx % g.dims[0]);
        wsum += v as f64;
        wx += v as f64 * x;
        count += 1;
        xsum += x;
    }
    if count == 0 {
        return Err(KeyFrameError::NoBone);
    }
    Ok(if wsum > 0.0 {
        wx / wsum
    } else {
        xsum / count as f64
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyFrame {
    pub slice: SagittalSlice,
    pub weight: f64,
    pub side: Side,
    pub len_rows: usize,
    pub row_maxima: Vec<u8>,
}

impl KeyFrame {
    pub fn lateral_mm(&self) -> f64 {
        self.slice.lateral_mm
    }

    pub fn report(&self) -> KeyFrameReport {
        KeyFrameReport {
            side: self.side,
            lateral_index: self.slice.lateral_index,
            lateral_mm: self.slice.lateral_mm,
            weight: self.weight,
            len_rows: self.len_rows,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyFrameReport {
    pub side: Side,
    pub lateral_index: usize,
    pub lateral_mm: f64,
    pub weight: f64,
    pub len_rows: usize,
}

/// Picks the highest-weight slice on each side of the bone midline, ignoring
/// slices within `margin_mm` of it. Ties go to the slice farther from the
/// midline, then to the lower lateral index.
pub fn select_key_frames(
    vol: &Volume,
    margin_mm: f64,
) -> Result<(KeyFrame, KeyFrame), KeyFrameError> {
    if !(margin_mm >= 0.0 && margin_mm.is_finite()) {
        return Err(KeyFrameError::Margin(margin_mm));
    }
    let midline = find_midline(vol)?;
    let weights = slice_weights(vol);
    let g = &vol.geometry;

    let pick = |side: Side| -> Result<KeyFrame, KeyFrameError> {
        let mut best: Option<(usize, &SliceWeight)> = None;
        for (ix, w) in weights.iter().enumerate() {
            let Some(w) = w else { continue };
            let x = g.lateral_mm(ix);
            let eligible = match side {
                Side::Left => x < midline - margin_mm,
                Side::Right => x > midline + margin_mm,
            };
            if !eligible {
                continue;
            }
            best = match best {
                None => Some((ix, w)),
                Some((bix, bw)) => {
                    let better = w.weight > bw.weight
                        || (w.weight == bw.weight
                            && (x - midline).abs() > (g.lateral_mm(bix) - midline).abs());
                    if better {
                        Some((ix, w))
                    } else {
                        Some((bix, bw))
                    }
                }
            };
        }
        let (ix, w) = best.ok_or(KeyFrameError::NoCandidate { side, margin_mm })?;
        Ok(KeyFrame {
            slice: SagittalSlice::from_volume(vol, ix),
            weight: w.weight,
            side,
            len_rows: w.len_rows,
            row_maxima: w.row_maxima.clone(),
        })
    };
    Ok((pick(Side::Left)?, pick(Side::Right)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reconstruction::VolumeGeometry;

    fn slice_from_rows(rows: &[&[(u8, u8)]]) -> SagittalSlice {
        let ny = rows[0].len();
        SagittalSlice {
            lateral_index: 0,
            lateral_mm: 0.0,
            nz: rows.len(),
            ny,
            intensity: rows.iter().flat_map(|r| r.iter().map(|p| p.0)).collect(),
            bone: rows.iter().flat_map(|r| r.iter().map(|p| p.1)).collect(),
        }
    }

    #[test]
    fn no_bone_sentinel() {
        let s = slice_from_rows(&[&[(200, 0), (10, 0)], &[(5, 0), (0, 0)]]);
        assert!(slice_weight(&s).is_none());
        let black = slice_from_rows(&[&[(0, 1), (10, 0)]]);
        assert!(slice_weight(&black).is_none());
    }

    #[test]
    fn two_rows_three_and_four() {
        // Row maxima are taken over bone voxels only: 3 and 4, never the 9.
        let s = slice_from_rows(&[
            &[(3, 1), (1, 1), (9, 0)],
            &[(0, 0), (0, 0), (0, 0)],
            &[(4, 1), (2, 0), (0, 0)],
        ]);
        let w = slice_weight(&s).unwrap();
        assert_eq!(w.len_rows, 2);
        assert_eq!(w.row_maxima, vec![3, 4]);
        assert!((w.weight - 7f64.ln() * 2.0).abs() < 1e-12);
        assert!((w.weight - 3.8918).abs() < 1e-4);
    }

    #[test]
    fn extra_row_increases_weight() {
        let b = slice_from_rows(&[&[(50, 1)], &[(60, 1)], &[(0, 0)]]);
        let a = slice_from_rows(&[&[(50, 1)], &[(60, 1)], &[(1, 1)]]);
        assert!(slice_weight(&a).unwrap().weight > slice_weight(&b).unwrap().weight);
    }

    fn volume(dims: [usize; 3], origin_x: f64) -> Volume {
        Volume::empty(VolumeGeometry {
            origin: [origin_x, 0.0, 0.0],
            spacing: [1.0; 3],
            dims,
        })
    }

    fn put(vol: &mut Volume, ix: usize, iy: usize, iz: usize, v: u8) {
        let idx = vol.geometry.index(ix, iy, iz);
        vol.intensity[idx] = v;
        vol.bone[idx] = 1;
        vol.hit_count[idx] = 1;
    }

    #[test]
    fn midline_examples() {
        let mut vol = volume([31, 1, 1], -10.0);
        put(&mut vol, 0, 0, 0, 50);
        put(&mut vol, 30, 0, 0, 50);
        assert!((find_midline(&vol).unwrap() - 5.0).abs() < 1e-12);

        let mut single = volume([31, 1, 1], -10.0);
        put(&mut single, 17, 0, 0, 9);
        assert!((find_midline(&single).unwrap() - 7.0).abs() < 1e-12);

        let mut sym = volume([21, 1, 1], -10.0);
        put(&mut sym, 3, 0, 0, 40);
        put(&mut sym, 17, 0, 0, 40);
        put(&mut sym, 10, 0, 0, 200);
        assert!(find_midline(&sym).unwrap().abs() < 1e-12);

        assert!(matches!(
            find_midline(&volume([3, 3, 3], 0.0)),
            Err(KeyFrameError::NoBone)
        ));
    }

    #[test]
    fn longer_dimmer_slice_wins() {
        // Left: x = -20 has 30 rows at 200, x = -15 has 40 rows at 50.
        // 30 ln 6000 ~ 260.9 < 40 ln 2000 ~ 304.0.
        let mut vol = volume([41, 2, 45], -20.0);
        for iz in 0..30 {
            put(&mut vol, 0, 0, iz, 200);
        }
        for iz in 0..40 {
            put(&mut vol, 5, 1, iz, 50);
        }
        for iz in 0..40 {
            put(&mut vol, 40, 0, iz, 200);
            put(&mut vol, 39, 0, iz, 200);
        }
        // keep the midline near x = 0
        for iz in 0..45 {
            put(&mut vol, 24, 0, iz, 255);
        }
        let mid = find_midline(&vol).unwrap();
        assert!(mid > -5.0 && mid < 10.0, "midline {mid}");
        let (left, right) = select_key_frames(&vol, 5.0).unwrap();
        assert_eq!(left.slice.lateral_index, 5);
        assert!((left.weight - 40.0 * 2000f64.ln()).abs() < 1e-9);
        assert!((left.weight - 304.0).abs() < 0.1);
        assert!((30.0 * 6000f64.ln() - 260.9).abs() < 0.1);
        // equal weights at x = 19 and x = 20: the farther slice wins
        assert_eq!(right.slice.lateral_index, 40);
        assert_eq!(right.side, Side::Right);
    }

    #[test]
    fn weight_recomputes_from_fields() {
        let mut vol = volume([11, 3, 6], -5.0);
        for iz in 0..6 {
            put(&mut vol, 1, iz % 3, iz, 10 * iz as u8 + 3);
            put(&mut vol, 9, 1, iz, 77);
        }
        put(&mut vol, 5, 0, 0, 1);
        let (l, r) = select_key_frames(&vol, 1.0).unwrap();
        for k in [l, r] {
            let sum: f64 = k.row_maxima.iter().map(|&m| m as f64).sum();
            assert!((k.weight - sum.ln() * k.len_rows as f64).abs() < 1e-9);
            assert!(k.len_rows >= 1);
        }
    }

    #[test]
    fn missing_side_is_error() {
        let mut vol = volume([11, 1, 3], -5.0);
        put(&mut vol, 0, 0, 0, 100);
        put(&mut vol, 0, 0, 1, 100);
        assert!(matches!(
            select_key_frames(&vol, 1.0),
            Err(KeyFrameError::NoCandidate {
                side: Side::Left,
                ..
            })
        ));
    }
}
