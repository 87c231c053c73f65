//! Synthetic tracked scans with analytically known lamina curves.
//!
//! Each transverse frame sits at `z = k * frame_spacing` and shows three
//! Gaussian bright blobs: the spinous process on the midline and the two
//! laminae at `±lamina_offset`. The lamina depth follows the curve model along
//! z and the probe rides the curve, so every frame sees the same anatomy
//! window. Masks are the blob pixels at or above a quarter of the peak.
//!
//! Frames are rendered from the nominal probe trajectory; `pose_noise`
//! perturbs only the recorded poses, emulating tracker error.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corepoints::DEFAULT_BAND_MM;
use crate::curvefit::{measure_angles, LaminaCurve};
use crate::keyframe::DEFAULT_MARGIN_MM;
use crate::scan_model::{
    write_dataset, Pose, Posture, Quaternion, Raster, ScanDataset, ScanError, TrackedFrame,
};

pub const TRUTH_FILE: &str = "truth.json";

#[derive(Debug, Error)]
pub enum PhantomError {
    #[error("invalid phantom spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Lamina depth profile along the scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurveModel {
    /// Circular arc through the scan ends whose end tangents differ by
    /// `angle_deg`. Positive bends with the depth largest mid-scan (lordosis),
    /// negative the other way.
    CircularArc { angle_deg: f64 },
    /// Depth offset `sum c[k] t^k` in mm, `t` mapping the scan extent onto [-1, 1].
    Quintic { coeffs: [f64; 6] },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseNoise {
    pub translation_sd_mm: f64,
    pub rotation_sd_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub curve_model: CurveModel,
    pub lamina_offset_mm: f64,
    pub blob_sigma_mm: f64,
    pub frame_count: usize,
    pub frame_spacing_mm: f64,
    pub pose_noise: PoseNoise,
    pub intensity_peak: u8,
    pub seed: u64,
    /// `(width, height)` in pixels.
    pub frame_size: [usize; 2],
    pub pixel_spacing_mm: [f64; 2],
    /// Depth of the laminae below the probe face.
    pub lamina_depth_mm: f64,
    /// How much shallower the spinous process sits than the laminae.
    pub spinous_rise_mm: f64,
    pub subject_id: String,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            curve_model: CurveModel::CircularArc { angle_deg: 25.0 },
            lamina_offset_mm: 15.0,
            blob_sigma_mm: 1.5,
            frame_count: 400,
            frame_spacing_mm: 0.3,
            pose_noise: PoseNoise {
                translation_sd_mm: 0.0,
                rotation_sd_deg: 0.0,
            },
            intensity_peak: 200,
            seed: 0,
            frame_size: [256, 192],
            pixel_spacing_mm: [0.25, 0.25],
            lamina_depth_mm: 28.0,
            spinous_rise_mm: 8.0,
            subject_id: "phantom".into(),
        }
    }
}

impl PhantomSpec {
    pub fn arc(angle_deg: f64) -> Self {
        Self {
            curve_model: CurveModel::CircularArc { angle_deg },
            ..Self::default()
        }
    }

    /// Radius within which a blob clears the quarter-peak mask threshold.
    pub fn mask_radius_mm(&self) -> f64 {
        self.blob_sigma_mm * (2.0 * 4f64.ln()).sqrt()
    }

    pub fn validate(&self) -> Result<(), PhantomError> {
        let bad = |m: String| Err(PhantomError::InvalidSpec(m));
        if self.frame_count < crate::curvefit::MIN_FIT_POINTS {
            return bad(format!(
                "frame_count {} is below the fit minimum of {}",
                self.frame_count,
                crate::curvefit::MIN_FIT_POINTS
            ));
        }
        if !(self.blob_sigma_mm > 0.0 && self.blob_sigma_mm.is_finite()) {
            return bad("blob_sigma_mm must be > 0".into());
        }
        if !(self.frame_spacing_mm > 0.0 && self.frame_spacing_mm.is_finite()) {
            return bad("frame_spacing_mm must be > 0".into());
        }
        if !self
            .pixel_spacing_mm
            .iter()
            .all(|s| *s > 0.0 && s.is_finite())
        {
            return bad("pixel spacing must be > 0".into());
        }
        if self.frame_size[0] < 2 || self.frame_size[1] < 2 {
            return bad("frames must be at least 2x2 pixels".into());
        }
        if self.intensity_peak == 0 {
            return bad("intensity_peak must be > 0".into());
        }
        let n = self.pose_noise;
        if !(n.translation_sd_mm >= 0.0 && n.rotation_sd_deg >= 0.0) {
            return bad("pose noise deviations must be >= 0".into());
        }
        // Key-frame candidacy excludes the midline margin and the lamina band
        // must not reach the spinous process.
        let min_offset = DEFAULT_MARGIN_MM + DEFAULT_BAND_MM;
        if !(self.lamina_offset_mm > min_offset) {
            return bad(format!(
                "lamina_offset_mm {} must exceed margin + band = {min_offset} mm",
                self.lamina_offset_mm
            ));
        }
        let half_width = (self.frame_size[0] / 2) as f64 * self.pixel_spacing_mm[0];
        if self.lamina_offset_mm + 3.0 * self.blob_sigma_mm > half_width - self.pixel_spacing_mm[0]
        {
            return bad(format!(
                "laminae at ±{} mm do not fit in a {half_width} mm half-width frame",
                self.lamina_offset_mm
            ));
        }
        let depth = (self.frame_size[1] - 1) as f64 * self.pixel_spacing_mm[1];
        let reach = 3.0 * self.blob_sigma_mm;
        if self.lamina_depth_mm - self.spinous_rise_mm - reach < 0.0
            || self.lamina_depth_mm + reach > depth
        {
            return bad(format!(
                "blobs at depth {} mm (spinous {} mm shallower) do not fit a {depth} mm deep frame",
                self.lamina_depth_mm, self.spinous_rise_mm
            ));
        }
        match &self.curve_model {
            CurveModel::CircularArc { angle_deg } => {
                if !(angle_deg.abs() < 180.0) {
                    return bad(format!("arc angle {angle_deg} must lie in (-180, 180)"));
                }
            }
            CurveModel::Quintic { coeffs } => {
                if !coeffs.iter().all(|c| c.is_finite()) {
                    return bad("quintic coefficients must be finite".into());
                }
            }
        }
        Ok(())
    }

    pub fn scan_length_mm(&self) -> f64 {
        (self.frame_count - 1) as f64 * self.frame_spacing_mm
    }

    /// Lamina depth (world y, mm) at longitudinal position `z`.
    pub fn lamina_depth_at(&self, z: f64) -> f64 {
        let half = 0.5 * self.scan_length_mm();
        let u = z - half;
        self.lamina_depth_mm
            + match &self.curve_model {
                CurveModel::CircularArc { angle_deg } => {
                    if *angle_deg == 0.0 {
                        0.0
                    } else {
                        let a = angle_deg.abs().to_radians() * 0.5;
                        let radius = half / a.sin();
                        angle_deg.signum() * ((radius * radius - u * u).sqrt() - radius * a.cos())
                    }
                }
                CurveModel::Quintic { coeffs } => crate::curvefit::polyfit::eval(coeffs, u / half),
            }
    }

    /// Angle the measurement should report for this curve.
    pub fn truth_angle_deg(&self) -> f64 {
        match &self.curve_model {
            CurveModel::CircularArc { angle_deg } => *angle_deg,
            CurveModel::Quintic { coeffs } => {
                let mut c = *coeffs;
                c[0] += self.lamina_depth_mm;
                let curve = LaminaCurve::from_coeffs(c, 0.0, self.scan_length_mm());
                measure_angles(curve)
                    .ok()
                    .and_then(|m| m.reported_angle_deg)
                    .unwrap_or(0.0)
            }
        }
    }

    fn posture(&self) -> Posture {
        if self.truth_angle_deg() < 0.0 {
            Posture::Flexion
        } else {
            Posture::Neutral
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub truth_angle_deg: f64,
    pub scan_length_mm: f64,
    pub spec: PhantomSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub dataset: ScanDataset,
    pub truth: GroundTruth,
}

impl Phantom {
    /// Writes the scan plus `truth.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(), PhantomError> {
        let dir = dir.as_ref();
        write_dataset(&self.dataset, dir)?;
        let path = dir.join(TRUTH_FILE);
        let json = serde_json::to_string_pretty(&self.truth).expect("truth serializes");
        fs::write(&path, json + "\n").map_err(|source| PhantomError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Nominal probe pose for frame `k`: identity orientation, the column at
/// `width / 2` on the midline, laminae at `lamina_depth_mm` below the face.
fn nominal_pose(spec: &PhantomSpec, k: usize) -> Pose {
    let z = k as f64 * spec.frame_spacing_mm;
    Pose::from_translation([
        -((spec.frame_size[0] / 2) as f64) * spec.pixel_spacing_mm[0],
        spec.lamina_depth_at(z) - spec.lamina_depth_mm,
        z,
    ])
}

fn render_frame(spec: &PhantomSpec, k: usize, pose: &Pose) -> (Raster, Raster) {
    let [w, h] = spec.frame_size;
    let [sw, sh] = spec.pixel_spacing_mm;
    let z = k as f64 * spec.frame_spacing_mm;
    let depth = spec.lamina_depth_at(z);
    let blobs = [
        (0.0, depth - spec.spinous_rise_mm),
        (-spec.lamina_offset_mm, depth),
        (spec.lamina_offset_mm, depth),
    ];
    let peak = spec.intensity_peak as f64;
    let inv2s2 = 1.0 / (2.0 * spec.blob_sigma_mm * spec.blob_sigma_mm);
    let cutoff2 = (6.0 * spec.blob_sigma_mm).powi(2);
    let mut intensity = Raster::zeros(w, h);
    let mut mask = Raster::zeros(w, h);
    for row in 0..h {
        for col in 0..w {
            let p = pose.transform([col as f64 * sw, row as f64 * sh, 0.0]);
            let d2 = blobs
                .iter()
                .map(|&(bx, by)| (p[0] - bx).powi(2) + (p[1] - by).powi(2))
                .fold(f64::INFINITY, f64::min);
            if d2 > cutoff2 {
                continue;
            }
            let v = peak * (-d2 * inv2s2).exp();
            intensity.set(col, row, v.round() as u8);
            if v >= 0.25 * peak {
                mask.set(col, row, 1);
            }
        }
    }
    (intensity, mask)
}

fn recorded_pose(spec: &PhantomSpec, k: usize, nominal: Pose) -> Pose {
    let noise = spec.pose_noise;
    if noise.translation_sd_mm == 0.0 && noise.rotation_sd_deg == 0.0 {
        return nominal;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(k as u64);
    let mut pose = nominal;
    if noise.translation_sd_mm > 0.0 {
        let n = Normal::new(0.0, noise.translation_sd_mm).expect("sd checked");
        for p in pose.position.iter_mut() {
            *p += n.sample(&mut rng);
        }
    }
    if noise.rotation_sd_deg > 0.0 {
        let n = Normal::new(0.0, noise.rotation_sd_deg.to_radians()).expect("sd checked");
        let v = [n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng)];
        pose.orientation = Quaternion::from_rotation_vector(v).mul(&pose.orientation);
    }
    pose
}

pub fn generate(spec: &PhantomSpec) -> Result<Phantom, PhantomError> {
    spec.validate()?;
    let frames = (0..spec.frame_count)
        .map(|k| {
            let nominal = nominal_pose(spec, k);
            let (intensity, mask) = render_frame(spec, k, &nominal);
            TrackedFrame {
                index: k as u32,
                intensity,
                mask,
                pose: recorded_pose(spec, k, nominal),
                pixel_spacing: spec.pixel_spacing_mm,
            }
        })
        .collect();
    Ok(Phantom {
        dataset: ScanDataset {
            subject_id: spec.subject_id.clone(),
            posture: spec.posture(),
            pixel_spacing: spec.pixel_spacing_mm,
            frame_size: spec.frame_size,
            frames,
        },
        truth: GroundTruth {
            truth_angle_deg: spec.truth_angle_deg(),
            scan_length_mm: spec.scan_length_mm(),
            spec: spec.clone(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(angle: f64) -> PhantomSpec {
        PhantomSpec {
            frame_count: 40,
            frame_spacing_mm: 2.0,
            ..PhantomSpec::arc(angle)
        }
    }

    #[test]
    fn arc_end_tangents_differ_by_angle() {
        let spec = small(30.0);
        let l = spec.scan_length_mm();
        let e = 1e-6;
        let slope =
            |z: f64| (spec.lamina_depth_at(z + e) - spec.lamina_depth_at(z - e)) / (2.0 * e);
        let caudal = slope(e).atan().to_degrees();
        let cranial = slope(l - e).atan().to_degrees();
        assert!((caudal - cranial - 30.0).abs() < 1e-3);
        // ends at the nominal depth, deepest mid-scan
        assert!((spec.lamina_depth_at(0.0) - spec.lamina_depth_mm).abs() < 1e-9);
        assert!(spec.lamina_depth_at(l / 2.0) > spec.lamina_depth_mm);
        assert!(small(-12.0).lamina_depth_at(l / 2.0) < spec.lamina_depth_mm);
    }

    #[test]
    fn quintic_truth_uses_measurement_rule() {
        let spec = PhantomSpec {
            curve_model: CurveModel::Quintic {
                coeffs: [0.0, 0.0, -6.0, 0.0, 0.0, 0.0],
            },
            ..small(0.0)
        };
        // y = -6 t^2 over half-length 39 mm: end slopes ±12/39
        let expected = 2.0 * (12.0f64 / 39.0).atan().to_degrees();
        assert!((spec.truth_angle_deg() - expected).abs() < 1e-9);
    }

    #[test]
    fn frames_contain_three_blobs() {
        let p = generate(&small(20.0)).unwrap();
        let f = &p.dataset.frames[5];
        assert_eq!(f.intensity.data.iter().copied().max(), Some(200));
        // three disks of radius ~2.5 mm at 0.25 mm/px
        let r = small(20.0).mask_radius_mm() / 0.25;
        let disk = std::f64::consts::PI * r * r;
        let n = f.mask.count_nonzero() as f64;
        assert!(
            (n - 3.0 * disk).abs() < 0.1 * 3.0 * disk,
            "{n} vs {}",
            3.0 * disk
        );
        assert_eq!(p.dataset.posture, Posture::Neutral);
        assert_eq!(
            generate(&small(-10.0)).unwrap().dataset.posture,
            Posture::Flexion
        );
    }

    #[test]
    fn deterministic_with_noise() {
        let mut spec = small(10.0);
        spec.pose_noise = PoseNoise {
            translation_sd_mm: 0.3,
            rotation_sd_deg: 0.5,
        };
        spec.seed = 7;
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        spec.seed = 8;
        let c = generate(&spec).unwrap();
        assert_ne!(a.dataset.frames[3].pose, c.dataset.frames[3].pose);
        // images come from the nominal trajectory, independent of noise
        assert_eq!(a.dataset.frames[3].intensity, c.dataset.frames[3].intensity);
    }

    #[test]
    fn invalid_specs() {
        let too_few = PhantomSpec {
            frame_count: 10,
            ..PhantomSpec::default()
        };
        assert!(matches!(
            generate(&too_few),
            Err(PhantomError::InvalidSpec(_))
        ));
        let close = PhantomSpec {
            lamina_offset_mm: 8.0,
            ..PhantomSpec::default()
        };
        assert!(close.validate().is_err());
        assert!(PhantomSpec::arc(180.0).validate().is_err());
        let blob = PhantomSpec {
            blob_sigma_mm: 0.0,
            ..PhantomSpec::default()
        };
        assert!(blob.validate().is_err());
    }
}
