//! Independent oracles shared by the integration suites. Nothing here calls
//! into the code paths it is used to check.

#![allow(dead_code)]

use lamina::reconstruction::{Volume, VolumeGeometry};
use lamina::scan_model::{Pose, Posture, Quaternion, Raster, ScanDataset, TrackedFrame};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Signed, ToPrimitive, Zero};
use rand::Rng;

/// O(n^2) density clustering: returns (is_noise per point, number of clusters).
/// Neighborhoods use squared distances `<= eps^2`, self included.
pub fn brute_dbscan(points: &[[f64; 2]], eps: f64, min_pts: usize) -> (Vec<bool>, usize) {
    let n = points.len();
    let near = |i: usize, j: usize| {
        let (dz, dy) = (points[i][0] - points[j][0], points[i][1] - points[j][1]);
        dz * dz + dy * dy <= eps * eps
    };
    let core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts)
        .collect();
    let noise: Vec<bool> = (0..n)
        .map(|i| !core[i] && !(0..n).any(|j| core[j] && near(i, j)))
        .collect();
    // union-find over core-core adjacency
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..n {
        for j in 0..n {
            if core[i] && core[j] && near(i, j) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut roots: Vec<usize> = (0..n)
        .filter(|&i| core[i])
        .map(|i| find(&mut parent, i))
        .collect();
    roots.sort();
    roots.dedup();
    (noise, roots.len())
}

/// Slice energy evaluated directly on the voxel arrays: `None` when there is
/// no bone row or the maxima sum to zero.
pub fn brute_slice_weight(vol: &Volume, ix: usize) -> Option<f64> {
    let [nx, ny, nz] = vol.geometry.dims;
    let mut rows = 0usize;
    let mut sum = 0u64;
    for iz in 0..nz {
        let mut m: Option<u8> = None;
        for iy in 0..ny {
            let idx = ix + nx * (iy + ny * iz);
            if vol.bone[idx] == 1 {
                m = Some(m.unwrap_or(0).max(vol.intensity[idx]));
            }
        }
        if let Some(v) = m {
            rows += 1;
            sum += v as u64;
        }
    }
    (rows > 0 && sum > 0).then(|| (sum as f64).ln() * rows as f64)
}

/// Exhaustive key-frame choice: (left index, right index).
pub fn brute_key_frames(vol: &Volume, margin: f64) -> Option<(usize, usize)> {
    let g = vol.geometry;
    let [nx, _, _] = g.dims;
    let (mut w, mut wx, mut cnt, mut sx) = (0.0, 0.0, 0.0, 0.0);
    for idx in 0..vol.bone.len() {
        if vol.bone[idx] == 1 {
            let x = g.origin[0] + (idx % nx) as f64 * g.spacing[0];
            w += vol.intensity[idx] as f64;
            wx += vol.intensity[idx] as f64 * x;
            cnt += 1.0;
            sx += x;
        }
    }
    if cnt == 0.0 {
        return None;
    }
    let mid = if w > 0.0 { wx / w } else { sx / cnt };
    let mut best_l: Option<(f64, f64, usize)> = None;
    let mut best_r: Option<(f64, f64, usize)> = None;
    for ix in 0..nx {
        let x = g.origin[0] + ix as f64 * g.spacing[0];
        let Some(weight) = brute_slice_weight(vol, ix) else {
            continue;
        };
        let key = (weight, (x - mid).abs(), ix);
        let slot = if x < mid - margin {
            &mut best_l
        } else if x > mid + margin {
            &mut best_r
        } else {
            continue;
        };
        let better = match slot {
            None => true,
            Some((bw, bd, _)) => weight > *bw || (weight == *bw && key.1 > *bd),
        };
        if better {
            *slot = Some(key);
        }
    }
    Some((best_l?.2, best_r?.2))
}

/// Random volume of at most 64^3 voxels with a few bone tracks and speckle.
pub fn random_volume(rng: &mut impl Rng) -> Volume {
    let dims = [
        rng.gen_range(12..=64),
        rng.gen_range(4..=32),
        rng.gen_range(4..=64),
    ];
    let geom = VolumeGeometry {
        origin: [
            -(dims[0] as f64) * 0.25 + rng.gen_range(-2.0..2.0),
            0.0,
            0.0,
        ],
        spacing: [0.5, 0.5, 0.5],
        dims,
    };
    let mut vol = Volume::empty(geom);
    let tracks = rng.gen_range(1..6);
    for _ in 0..tracks {
        let ix = rng.gen_range(0..dims[0]);
        let iy = rng.gen_range(0..dims[1]);
        let z0 = rng.gen_range(0..dims[2]);
        let z1 = rng.gen_range(z0..dims[2]);
        let base = rng.gen_range(1..=255u32);
        for iz in z0..=z1 {
            let y = (iy + rng.gen_range(0..3)).min(dims[1] - 1);
            let idx = geom.index(ix, y, iz);
            vol.bone[idx] = 1;
            vol.intensity[idx] = (base as i32 + rng.gen_range(-40..40)).clamp(0, 255) as u8;
            vol.hit_count[idx] = 1;
        }
    }
    for _ in 0..rng.gen_range(0..200) {
        let idx = rng.gen_range(0..geom.len());
        vol.intensity[idx] = rng.gen();
        vol.hit_count[idx] = 1;
        if rng.gen_bool(0.3) {
            vol.bone[idx] = 1;
        }
    }
    vol
}

/// Random tracked sweep with small rotations and textured frames.
pub fn random_scan(rng: &mut impl Rng, n: u32, w: usize, h: usize) -> ScanDataset {
    let frames = (0..n)
        .map(|k| {
            let intensity = Raster::from_vec(w, h, (0..w * h).map(|_| rng.gen()).collect());
            let mask =
                Raster::from_vec(w, h, (0..w * h).map(|_| rng.gen_bool(0.2) as u8).collect());
            let axis = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let pose = Pose {
                position: [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    0.4 * k as f64 + rng.gen_range(-0.2..0.2),
                ],
                orientation: Quaternion::from_axis_angle(axis, rng.gen_range(-0.2..0.2)),
            };
            TrackedFrame {
                index: k,
                intensity,
                mask,
                pose,
                pixel_spacing: [0.3, 0.3],
            }
        })
        .collect();
    ScanDataset {
        subject_id: "random".into(),
        posture: Posture::Neutral,
        pixel_spacing: [0.3, 0.3],
        frame_size: [w, h],
        frames,
    }
}

fn rat(v: f64) -> BigRational {
    BigRational::from_f64(v).expect("finite")
}

/// Solves the polynomial normal equations in exact rational arithmetic.
pub fn exact_normal_equations(t: &[f64], y: &[f64], degree: usize) -> Vec<f64> {
    let n = degree + 1;
    let tr: Vec<BigRational> = t.iter().map(|&v| rat(v)).collect();
    let yr: Vec<BigRational> = y.iter().map(|&v| rat(v)).collect();
    let powers: Vec<Vec<BigRational>> = tr
        .iter()
        .map(|ti| {
            let mut p = vec![BigRational::from_integer(BigInt::from(1))];
            for k in 1..2 * n {
                let next = &p[k - 1] * ti;
                p.push(next);
            }
            p
        })
        .collect();
    let mut m: Vec<Vec<BigRational>> = (0..n)
        .map(|r| {
            let mut row: Vec<BigRational> = (0..n)
                .map(|c| {
                    powers
                        .iter()
                        .fold(BigRational::zero(), |acc, p| acc + &p[r + c])
                })
                .collect();
            row.push(
                powers
                    .iter()
                    .zip(&yr)
                    .fold(BigRational::zero(), |acc, (p, yi)| acc + &p[r] * yi),
            );
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by_key(|&r| m[r][col].abs()).unwrap();
        m.swap(col, piv);
        assert!(!m[col][col].is_zero(), "singular normal equations");
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = &m[r][col] / &m[col][col];
                let pivot_row = m[col].clone();
                for (target, p) in m[r].iter_mut().zip(&pivot_row).skip(col) {
                    *target -= &f * p;
                }
            }
        }
    }
    (0..n)
        .map(|r| (&m[r][n] / &m[r][r]).to_f64().unwrap())
        .collect()
}
