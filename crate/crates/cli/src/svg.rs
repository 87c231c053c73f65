//! Sagittal key-slice plots: slice underlay, core points, fitted curve and
//! tangents at the evaluation points.

use std::fmt::Write as _;
use std::io::Cursor;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use image::{GrayImage, ImageFormat};
use lamina::pipeline::SideMeasurement;
use lamina::reconstruction::VolumeGeometry;

const PX_PER_MM: f64 = 4.0;
const PAD: f64 = 20.0;
const TANGENT_HALF_MM: f64 = 12.0;
const CURVE_SAMPLES: usize = 200;

struct Frame {
    z0: f64,
    y0: f64,
}

impl Frame {
    fn x(&self, z: f64) -> f64 {
        PAD + (z - self.z0) * PX_PER_MM
    }

    fn y(&self, y: f64) -> f64 {
        PAD + (y - self.y0) * PX_PER_MM
    }
}

/// PNG of the key slice with z across and depth down, as a data URI.
fn slice_data_uri(side: &SideMeasurement) -> String {
    let slice = &side.key_frame.slice;
    let img = GrayImage::from_fn(slice.nz as u32, slice.ny as u32, |iz, iy| {
        image::Luma([slice.intensity[iz as usize * slice.ny + iy as usize]])
    });
    let mut png = Vec::new();
    img.write_to(&mut Cursor::new(&mut png), ImageFormat::Png)
        .expect("in-memory png encoding");
    format!("data:image/png;base64,{}", STANDARD.encode(png))
}

pub fn render(side: &SideMeasurement, geometry: &VolumeGeometry, title: &str) -> String {
    let [_, ny, nz] = geometry.dims;
    let frame = Frame {
        z0: geometry.origin[2],
        y0: geometry.origin[1],
    };
    let img_w = (nz as f64 - 1.0).max(1.0) * geometry.spacing[2] * PX_PER_MM;
    let img_h = (ny as f64 - 1.0).max(1.0) * geometry.spacing[1] * PX_PER_MM;
    let (width, height) = (img_w + 2.0 * PAD + 220.0, img_h + 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(s, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>");
    let _ = writeln!(s, "<!-- lamina {} -->", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.1}\" height=\"{height:.1}\" viewBox=\"0 0 {width:.1} {height:.1}\">"
    );
    let _ = writeln!(s, "<title>{title}</title>");
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"black\"/>");
    let _ = writeln!(
        s,
        "<image x=\"{PAD}\" y=\"{PAD}\" width=\"{img_w:.2}\" height=\"{img_h:.2}\" preserveAspectRatio=\"none\" style=\"image-rendering:pixelated\" href=\"{}\"/>",
        slice_data_uri(side)
    );

    let filtered = &side.result.filtered;
    let _ = writeln!(s, "<g fill=\"#888\">");
    for p in &filtered.noise {
        let _ = writeln!(
            s,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.5\"/>",
            frame.x(p.z_mm),
            frame.y(p.y_mm)
        );
    }
    let _ = writeln!(s, "</g>\n<g fill=\"#3fa9f5\">");
    for p in &filtered.kept {
        let _ = writeln!(
            s,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.5\"/>",
            frame.x(p.z_mm),
            frame.y(p.y_mm)
        );
    }
    let _ = writeln!(s, "</g>");

    let curve = &side.result.curve;
    let [z_min, z_max] = curve.z_domain;
    let path: Vec<String> = (0..=CURVE_SAMPLES)
        .map(|k| {
            let z = z_min + (z_max - z_min) * k as f64 / CURVE_SAMPLES as f64;
            format!("{:.2},{:.2}", frame.x(z), frame.y(curve.eval(z)))
        })
        .collect();
    let _ = writeln!(
        s,
        "<polyline fill=\"none\" stroke=\"#ff5a36\" stroke-width=\"2\" points=\"{}\"/>",
        path.join(" ")
    );

    for &z in &curve.evaluation_points {
        let (y, slope) = (curve.eval(z), curve.slope(z));
        let dz = TANGENT_HALF_MM / (1.0 + slope * slope).sqrt();
        let _ = writeln!(
            s,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#ffd400\" stroke-width=\"1.5\"/>",
            frame.x(z - dz),
            frame.y(y - slope * dz),
            frame.x(z + dz),
            frame.y(y + slope * dz)
        );
    }

    let box_x = img_w + 2.0 * PAD;
    let mut lines = vec![
        title.to_string(),
        format!("plane x = {:.2} mm", side.key_frame.lateral_mm()),
        match curve.reported_angle_deg {
            Some(a) => format!("angle {a:.2} deg"),
            None => "angle n/a".to_string(),
        },
        format!(
            "kept {} / noise {}",
            filtered.kept.len(),
            filtered.noise.len()
        ),
    ];
    lines.extend(
        curve
            .pair_angles_deg
            .iter()
            .enumerate()
            .map(|(k, a)| format!("pair {k}: {a:.2} deg")),
    );
    let _ = writeln!(
        s,
        "<rect x=\"{box_x:.1}\" y=\"{PAD}\" width=\"200\" height=\"{}\" fill=\"#222\" stroke=\"#ccc\"/>",
        16 * lines.len() + 10
    );
    let _ = writeln!(
        s,
        "<g fill=\"white\" font-family=\"monospace\" font-size=\"12\">"
    );
    for (k, line) in lines.iter().enumerate() {
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\">{line}</text>",
            box_x + 8.0,
            PAD + 18.0 + 16.0 * k as f64
        );
    }
    let _ = writeln!(s, "</g>\n</svg>");
    s
}
