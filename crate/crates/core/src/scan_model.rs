//! Scan datasets: tracked transverse frames, their poses and bone masks.
//!
//! On disk a scan is a directory holding a JSON manifest, a pose CSV table and
//! one binary PGM raster per intensity frame and per mask frame. Paths in the
//! manifest are relative to the manifest's directory.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;
pub const DEFAULT_FRAME_SIZE: [usize; 2] = [640, 480];

/// Frame counts outside this range produce a validation warning.
pub const TYPICAL_FRAME_COUNT: std::ops::RangeInclusive<usize> = 300..=600;
/// Consecutive probe positions further apart than this (mm) produce a warning.
pub const POSE_JUMP_WARN_MM: f64 = 20.0;

const POSE_HEADER: [&str; 8] = ["index", "x_mm", "y_mm", "z_mm", "qw", "qx", "qy", "qz"];

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {}: {source}", path.display())]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported manifest version {0}")]
    Version(u32),
    #[error("invalid pixel spacing {0:?}: both components must be finite and > 0")]
    PixelSpacing([f64; 2]),
    #[error("frame {frame}: cannot read raster {}: {message}", path.display())]
    Raster {
        frame: u32,
        path: PathBuf,
        message: String,
    },
    #[error("frame {frame}: intensity is {intensity:?} but mask is {mask:?} (width, height)")]
    DimensionMismatch {
        frame: u32,
        intensity: (usize, usize),
        mask: (usize, usize),
    },
    #[error("frame {frame}: raster is {found:?}, manifest declares {expected:?} (width, height)")]
    FrameSize {
        frame: u32,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("frame {frame}: mask value {value} at pixel ({x}, {y}) is not binary")]
    NonBinaryMask {
        frame: u32,
        value: u8,
        x: usize,
        y: usize,
    },
    #[error("frame {frame}: duplicate frame index")]
    DuplicateIndex { frame: u32 },
    #[error("frame {frame}: no row in the pose table")]
    MissingPose { frame: u32 },
    #[error("pose table line {line} (frame {frame:?}): {message}")]
    PoseRow {
        line: u64,
        frame: Option<u32>,
        message: String,
    },
    #[error("dataset contains no frames")]
    Empty,
}

/// Subject posture during the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Posture {
    Neutral,
    Flexion,
}

/// Unit quaternion `(w, x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if n == 0.0 || angle == 0.0 {
            return Self::IDENTITY;
        }
        let (s, c) = (angle * 0.5).sin_cos();
        Self::new(c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n)
    }

    /// Rotation whose axis is `v / |v|` and angle `|v|` radians.
    pub fn from_rotation_vector(v: [f64; 3]) -> Self {
        let angle = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        Self::from_axis_angle(v, angle)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Scales to unit norm. Quaternions already unit to within 1e-12 are
    /// returned untouched so that reloading a written table is bit-stable.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm();
        if !n.is_finite() || n == 0.0 {
            return None;
        }
        if (n - 1.0).abs() <= 1e-12 {
            return Some(*self);
        }
        Some(Self::new(self.w / n, self.x / n, self.y / n, self.z / n))
    }

    /// Row-major rotation matrix.
    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let Quaternion { w, x, y, z } = *self;
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }

    pub fn mul(&self, o: &Quaternion) -> Quaternion {
        Quaternion::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }
}

/// Probe pose in tracker space: frame-local millimeters map to world
/// millimeters as `world = R(orientation) * local + position`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: [f64; 3],
    pub orientation: Quaternion,
}

impl Pose {
    pub fn identity() -> Self {
        Self::from_translation([0.0; 3])
    }

    pub fn from_translation(position: [f64; 3]) -> Self {
        Self {
            position,
            orientation: Quaternion::IDENTITY,
        }
    }

    pub fn transform(&self, local: [f64; 3]) -> [f64; 3] {
        let m = self.orientation.to_matrix();
        let mut out = self.position;
        for (r, row) in m.iter().enumerate() {
            out[r] += row[0] * local[0] + row[1] * local[1] + row[2] * local[2];
        }
        out
    }
}

/// Row-major 8-bit single-channel raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Raster {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), width * height, "raster data length");
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, value: u8) {
        self.data[row * self.width + col] = value;
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }
}

/// One transverse image with its bone mask and tracked pose.
///
/// Pixel `(col, row)` sits at frame-local `(col * spacing[0], row * spacing[1], 0)`:
/// columns run laterally and rows run in depth.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedFrame {
    pub index: u32,
    pub intensity: Raster,
    /// Values are 0 or 1.
    pub mask: Raster,
    pub pose: Pose,
    pub pixel_spacing: [f64; 2],
}

impl TrackedFrame {
    pub fn width(&self) -> usize {
        self.intensity.width
    }

    pub fn height(&self) -> usize {
        self.intensity.height
    }

    /// World position of pixel `(col, row)`.
    pub fn pixel_to_world(&self, col: usize, row: usize) -> [f64; 3] {
        self.pose.transform([
            col as f64 * self.pixel_spacing[0],
            row as f64 * self.pixel_spacing[1],
            0.0,
        ])
    }

    /// World positions of the four corner pixel centers.
    pub fn corners_world(&self) -> [[f64; 3]; 4] {
        let (w, h) = (
            self.width().saturating_sub(1),
            self.height().saturating_sub(1),
        );
        [
            self.pixel_to_world(0, 0),
            self.pixel_to_world(w, 0),
            self.pixel_to_world(0, h),
            self.pixel_to_world(w, h),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanDataset {
    pub subject_id: String,
    pub posture: Posture,
    pub pixel_spacing: [f64; 2],
    /// `(width, height)` every frame must have.
    pub frame_size: [usize; 2],
    /// Sorted by strictly increasing index.
    pub frames: Vec<TrackedFrame>,
}

impl ScanDataset {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn total_mask_pixels(&self) -> usize {
        self.frames.iter().map(|f| f.mask.count_nonzero()).sum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameEntry {
    pub index: u32,
    pub intensity_file: String,
    pub mask_file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub subject_id: String,
    pub posture: Posture,
    pub pixel_spacing_mm: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_size: Option<[usize; 2]>,
    pub frames: Vec<FrameEntry>,
    pub pose_file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct PoseRecord {
    index: u32,
    x_mm: f64,
    y_mm: f64,
    z_mm: f64,
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ScanError + '_ {
    move |source| ScanError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads and validates a dataset. `path` may be the manifest itself or the
/// directory containing `manifest.json`.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<ScanDataset, ScanError> {
    let path = path.as_ref();
    let manifest_path = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    };
    let root = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|source| ScanError::Manifest {
        path: manifest_path.clone(),
        source,
    })?;
    if manifest.version != MANIFEST_VERSION {
        return Err(ScanError::Version(manifest.version));
    }
    let spacing = manifest.pixel_spacing_mm;
    if !spacing.iter().all(|s| s.is_finite() && *s > 0.0) {
        return Err(ScanError::PixelSpacing(spacing));
    }
    let frame_size = manifest.frame_size.unwrap_or(DEFAULT_FRAME_SIZE);

    let mut entries = manifest.frames.clone();
    entries.sort_by_key(|e| e.index);
    for pair in entries.windows(2) {
        if pair[0].index >= pair[1].index {
            return Err(ScanError::DuplicateIndex {
                frame: pair[1].index,
            });
        }
    }
    if entries.is_empty() {
        return Err(ScanError::Empty);
    }

    let poses = read_pose_table(&root.join(&manifest.pose_file))?;

    let mut frames = Vec::with_capacity(entries.len());
    for entry in &entries {
        let intensity = read_raster(&root.join(&entry.intensity_file), entry.index)?;
        let mut mask = read_raster(&root.join(&entry.mask_file), entry.index)?;
        if intensity.dims() != mask.dims() {
            return Err(ScanError::DimensionMismatch {
                frame: entry.index,
                intensity: intensity.dims(),
                mask: mask.dims(),
            });
        }
        if intensity.dims() != (frame_size[0], frame_size[1]) {
            return Err(ScanError::FrameSize {
                frame: entry.index,
                expected: (frame_size[0], frame_size[1]),
                found: intensity.dims(),
            });
        }
        binarize_mask(&mut mask, entry.index)?;
        let pose = *poses
            .get(&entry.index)
            .ok_or(ScanError::MissingPose { frame: entry.index })?;
        frames.push(TrackedFrame {
            index: entry.index,
            intensity,
            mask,
            pose,
            pixel_spacing: spacing,
        });
    }

    let ds = ScanDataset {
        subject_id: manifest.subject_id,
        posture: manifest.posture,
        pixel_spacing: spacing,
        frame_size,
        frames,
    };
    for warning in validate_dataset(&ds) {
        log::warn!("{warning}");
    }
    Ok(ds)
}

/// Mask rasters store background as 0 and bone as 1 or 255.
fn binarize_mask(mask: &mut Raster, frame: u32) -> Result<(), ScanError> {
    for (k, v) in mask.data.iter_mut().enumerate() {
        match *v {
            0 => {}
            1 | 255 => *v = 1,
            value => {
                return Err(ScanError::NonBinaryMask {
                    frame,
                    value,
                    x: k % mask.width,
                    y: k / mask.width,
                })
            }
        }
    }
    Ok(())
}

fn read_raster(path: &Path, frame: u32) -> Result<Raster, ScanError> {
    let raster_err = |message: String| ScanError::Raster {
        frame,
        path: path.to_path_buf(),
        message,
    };
    let file = fs::File::open(path).map_err(|e| raster_err(e.to_string()))?;
    let img = image::load(BufReader::new(file), ImageFormat::Pnm)
        .map_err(|e| raster_err(e.to_string()))?;
    let img = match img {
        image::DynamicImage::ImageLuma8(buf) => buf,
        other => {
            return Err(raster_err(format!(
                "expected 8-bit single-channel graymap, found {:?}",
                other.color()
            )))
        }
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(Raster::from_vec(w, h, img.into_raw()))
}

fn read_pose_table(path: &Path) -> Result<BTreeMap<u32, Pose>, ScanError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let headers = reader.headers().map_err(|e| ScanError::PoseRow {
        line: 1,
        frame: None,
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != POSE_HEADER {
        return Err(ScanError::PoseRow {
            line: 1,
            frame: None,
            message: format!("header must be {}", POSE_HEADER.join(",")),
        });
    }
    let mut poses = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| ScanError::PoseRow {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            frame: None,
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let frame = record.get(0).and_then(|s| s.parse::<u32>().ok());
        let row: PoseRecord = record.deserialize(None).map_err(|e| ScanError::PoseRow {
            line,
            frame,
            message: e.to_string(),
        })?;
        let row_err = |message: &str| ScanError::PoseRow {
            line,
            frame: Some(row.index),
            message: message.to_string(),
        };
        let position = [row.x_mm, row.y_mm, row.z_mm];
        if !position.iter().all(|v| v.is_finite()) {
            return Err(row_err("non-finite position"));
        }
        let orientation = Quaternion::new(row.qw, row.qx, row.qy, row.qz)
            .normalized()
            .ok_or_else(|| row_err("quaternion has zero or non-finite norm"))?;
        if poses
            .insert(
                row.index,
                Pose {
                    position,
                    orientation,
                },
            )
            .is_some()
        {
            return Err(row_err("duplicate pose row"));
        }
    }
    Ok(poses)
}

/// Human-readable warnings for unusual but loadable datasets.
pub fn validate_dataset(ds: &ScanDataset) -> Vec<String> {
    let mut warnings = Vec::new();
    let n = ds.frame_count();
    if !TYPICAL_FRAME_COUNT.contains(&n) {
        warnings.push(format!(
            "scan has {n} frames, outside the typical {}-{} range",
            TYPICAL_FRAME_COUNT.start(),
            TYPICAL_FRAME_COUNT.end()
        ));
    }
    for pair in ds.frames.windows(2) {
        let (a, b) = (pair[0].pose.position, pair[1].pose.position);
        let jump = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
        if jump > POSE_JUMP_WARN_MM {
            warnings.push(format!(
                "pose jump of {jump:.1} mm between frames {} and {}",
                pair[0].index, pair[1].index
            ));
        }
    }
    for frame in &ds.frames {
        if frame.mask.count_nonzero() == 0 {
            warnings.push(format!("frame {} has an empty mask", frame.index));
        }
    }
    warnings
}

fn write_pgm(path: &Path, raster: &Raster) -> Result<(), ScanError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(
            &raster.data,
            raster.width as u32,
            raster.height as u32,
            ExtendedColorType::L8,
        )
        .map_err(|e| ScanError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e),
        })?;
    out.flush().map_err(io_err(path))
}

/// Writes a raster as binary PGM. Used for masks exchanged with external tools.
pub fn write_raster(path: impl AsRef<Path>, raster: &Raster) -> Result<(), ScanError> {
    write_pgm(path.as_ref(), raster)
}

/// Reads a binary PGM raster without mask interpretation.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Raster, ScanError> {
    read_raster(path.as_ref(), 0)
}

/// Serializes the pose table exactly as [`write_dataset`] does.
pub fn pose_table_csv(ds: &ScanDataset) -> Result<Vec<u8>, csv::Error> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for frame in &ds.frames {
        let p = frame.pose;
        writer.serialize(PoseRecord {
            index: frame.index,
            x_mm: p.position[0],
            y_mm: p.position[1],
            z_mm: p.position[2],
            qw: p.orientation.w,
            qx: p.orientation.x,
            qy: p.orientation.y,
            qz: p.orientation.z,
        })?;
    }
    writer
        .into_inner()
        .map_err(|e| csv::Error::from(std::io::Error::other(e.to_string())))
}

/// Writes `ds` to `dir` (created if needed) in the on-disk scan format.
/// Masks are stored as 0/255 for viewing convenience.
pub fn write_dataset(ds: &ScanDataset, dir: impl AsRef<Path>) -> Result<PathBuf, ScanError> {
    let dir = dir.as_ref();
    let frames_dir = dir.join("frames");
    fs::create_dir_all(&frames_dir).map_err(io_err(&frames_dir))?;

    let mut entries = Vec::with_capacity(ds.frames.len());
    for frame in &ds.frames {
        let intensity_file = format!("frames/intensity_{:05}.pgm", frame.index);
        let mask_file = format!("frames/mask_{:05}.pgm", frame.index);
        write_pgm(&dir.join(&intensity_file), &frame.intensity)?;
        let mask = Raster::from_vec(
            frame.mask.width,
            frame.mask.height,
            frame
                .mask
                .data
                .iter()
                .map(|&v| if v != 0 { 255 } else { 0 })
                .collect(),
        );
        write_pgm(&dir.join(&mask_file), &mask)?;
        entries.push(FrameEntry {
            index: frame.index,
            intensity_file,
            mask_file,
        });
    }

    let pose_path = dir.join("poses.csv");
    let table = pose_table_csv(ds).map_err(|e| ScanError::Io {
        path: pose_path.clone(),
        source: std::io::Error::other(e),
    })?;
    fs::write(&pose_path, table).map_err(io_err(&pose_path))?;

    let manifest = Manifest {
        version: MANIFEST_VERSION,
        subject_id: ds.subject_id.clone(),
        posture: ds.posture,
        pixel_spacing_mm: ds.pixel_spacing,
        frame_size: Some(ds.frame_size),
        frames: entries,
        pose_file: "poses.csv".to_string(),
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, json + "\n").map_err(io_err(&manifest_path))?;
    Ok(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_dataset(n: u32, w: usize, h: usize) -> ScanDataset {
        let frames = (0..n)
            .map(|i| {
                let mut intensity = Raster::zeros(w, h);
                let mut mask = Raster::zeros(w, h);
                intensity.set(1, 1, 100u8.wrapping_add(i as u8));
                mask.set(1, 1, 1);
                TrackedFrame {
                    index: i,
                    intensity,
                    mask,
                    pose: Pose::from_translation([0.0, 0.0, i as f64]),
                    pixel_spacing: [0.5, 0.5],
                }
            })
            .collect();
        ScanDataset {
            subject_id: "T".into(),
            posture: Posture::Neutral,
            pixel_spacing: [0.5, 0.5],
            frame_size: [w, h],
            frames,
        }
    }

    #[test]
    fn loads_three_frames_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(3, 8, 6);
        write_dataset(&ds, dir.path()).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        assert_eq!(
            loaded.frames.iter().map(|f| f.index).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
        assert_eq!(loaded, ds);
    }

    #[test]
    fn mask_dimension_mismatch_names_frame() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(3, 640, 480);
        write_dataset(&ds, dir.path()).unwrap();
        write_pgm(
            &dir.path().join("frames/mask_00001.pgm"),
            &Raster::zeros(320, 480),
        )
        .unwrap();
        match load_dataset(dir.path()) {
            Err(ScanError::DimensionMismatch {
                frame,
                intensity,
                mask,
            }) => {
                assert_eq!(frame, 1);
                assert_eq!(intensity, (640, 480));
                assert_eq!(mask, (320, 480));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn default_frame_size_is_640_by_480() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(1, 8, 6);
        let manifest_path = write_dataset(&ds, dir.path()).unwrap();
        let mut manifest: Manifest =
            serde_json::from_str(&fs::read_to_string(&manifest_path).unwrap()).unwrap();
        manifest.frame_size = None;
        fs::write(&manifest_path, serde_json::to_string(&manifest).unwrap()).unwrap();
        assert!(matches!(
            load_dataset(&manifest_path),
            Err(ScanError::FrameSize {
                frame: 0,
                expected: (640, 480),
                found: (8, 6)
            })
        ));
    }

    #[test]
    fn non_binary_mask_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(2, 8, 6);
        write_dataset(&ds, dir.path()).unwrap();
        let mut bad = Raster::zeros(8, 6);
        bad.set(3, 2, 7);
        write_pgm(&dir.path().join("frames/mask_00001.pgm"), &bad).unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(ScanError::NonBinaryMask {
                frame: 1,
                value: 7,
                x: 3,
                y: 2
            })
        ));
    }

    #[test]
    fn duplicate_indices_rejected_and_listing_order_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(3, 8, 6);
        let manifest_path = write_dataset(&ds, dir.path()).unwrap();
        let mut manifest: Manifest =
            serde_json::from_str(&fs::read_to_string(&manifest_path).unwrap()).unwrap();

        manifest.frames.reverse();
        fs::write(&manifest_path, serde_json::to_string(&manifest).unwrap()).unwrap();
        assert_eq!(load_dataset(&manifest_path).unwrap(), ds);

        manifest.frames[0].index = 1;
        fs::write(&manifest_path, serde_json::to_string(&manifest).unwrap()).unwrap();
        assert!(matches!(
            load_dataset(&manifest_path),
            Err(ScanError::DuplicateIndex { frame: 1 })
        ));
    }

    #[test]
    fn malformed_pose_row_reports_frame() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(3, 8, 6);
        write_dataset(&ds, dir.path()).unwrap();
        let path = dir.path().join("poses.csv");
        let text = fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[3] = "2,0.0,zero,2.0,1.0,0.0,0.0,0.0";
        fs::write(&path, lines.join("\n")).unwrap();
        match load_dataset(dir.path()) {
            Err(ScanError::PoseRow { frame, .. }) => assert_eq!(frame, Some(2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_files_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(ScanError::Io { .. })
        ));
        let ds = tiny_dataset(2, 8, 6);
        write_dataset(&ds, dir.path()).unwrap();
        fs::remove_file(dir.path().join("frames/intensity_00001.pgm")).unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(ScanError::Raster { frame: 1, .. })
        ));
    }

    #[test]
    fn quaternions_are_normalized_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(1, 8, 6);
        write_dataset(&ds, dir.path()).unwrap();
        fs::write(
            dir.path().join("poses.csv"),
            "index,x_mm,y_mm,z_mm,qw,qx,qy,qz\n0,1.5,2,3,2,0,0,2\n",
        )
        .unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        let q = loaded.frames[0].pose.orientation;
        assert!((q.norm() - 1.0).abs() < 1e-6);
        assert!((q.w - 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(loaded.frames[0].pose.position, [1.5, 2.0, 3.0]);
    }

    #[test]
    fn warnings() {
        let mut ds = tiny_dataset(12, 8, 6);
        let w = validate_dataset(&ds);
        assert_eq!(w.len(), 1);
        assert!(w[0].contains("300-600"), "{w:?}");

        ds.frames[4].mask = Raster::zeros(8, 6);
        ds.frames[7].pose.position[0] = 50.0;
        let w = validate_dataset(&ds);
        assert_eq!(w.iter().filter(|s| s.contains("empty mask")).count(), 1);
        assert_eq!(w.iter().filter(|s| s.contains("pose jump")).count(), 2);
    }

    #[test]
    fn smooth_400_frame_scan_has_no_warnings() {
        let ds = tiny_dataset(400, 4, 4);
        assert!(validate_dataset(&ds).is_empty());
    }

    #[test]
    fn quaternion_matrix_rotates() {
        let q = Quaternion::from_axis_angle([0.0, 0.0, 1.0], std::f64::consts::FRAC_PI_2);
        let p = Pose {
            position: [1.0, 0.0, 0.0],
            orientation: q,
        };
        let w = p.transform([1.0, 0.0, 0.0]);
        assert!((w[0] - 1.0).abs() < 1e-12 && (w[1] - 1.0).abs() < 1e-12 && w[2].abs() < 1e-12);
    }
}
