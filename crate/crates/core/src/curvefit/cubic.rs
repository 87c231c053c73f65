//! Closed-form real roots of polynomials up to degree three.

use std::f64::consts::PI;

/// Coefficients whose magnitude is below this fraction of the largest one are
/// treated as zero when deciding the effective degree.
const DEGENERATE_REL: f64 = 1e-12;

/// Real roots of `a t^3 + b t^2 + c t + d`, ascending, duplicates merged.
/// An identically zero polynomial has no isolated roots and returns empty.
pub fn real_roots(a: f64, b: f64, c: f64, d: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs()).max(d.abs());
    if scale == 0.0 || !scale.is_finite() {
        return Vec::new();
    }
    let tiny = |v: f64| v.abs() <= DEGENERATE_REL * scale;
    let mut roots = if !tiny(a) {
        cubic(b / a, c / a, d / a)
    } else if !tiny(b) {
        quadratic(b, c, d)
    } else if !tiny(c) {
        vec![-d / c]
    } else {
        Vec::new()
    };
    if !tiny(a) {
        for r in roots.iter_mut() {
            *r = polish(*r, a, b, c, d);
        }
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * (1.0 + y.abs()));
    roots
}

fn quadratic(a: f64, b: f64, c: f64) -> Vec<f64> {
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    if disc == 0.0 {
        return vec![-b / (2.0 * a)];
    }
    // Avoids cancellation between -b and the square root.
    let q = -0.5 * (b + disc.sqrt().copysign(b));
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / a, c / q]
}

/// Roots of the monic cubic `t^3 + b t^2 + c t + d` via the depressed cubic
/// `s^3 + p s + q` with `t = s - b/3`.
fn cubic(b: f64, c: f64, d: f64) -> Vec<f64> {
    let shift = b / 3.0;
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;

    let s_roots: Vec<f64> = if p == 0.0 {
        vec![(-q).cbrt()]
    } else {
        let disc = -(4.0 * p * p * p + 27.0 * q * q);
        if disc >= 0.0 {
            // three real roots (p < 0): trigonometric form
            let m = 2.0 * (-p / 3.0).sqrt();
            let arg = ((3.0 * q) / (p * m)).clamp(-1.0, 1.0);
            let theta = arg.acos() / 3.0;
            (0..3)
                .map(|k| m * (theta - 2.0 * PI * k as f64 / 3.0).cos())
                .collect()
        } else if p < 0.0 {
            // one real root, hyperbolic cosine form
            let m = 2.0 * (-p / 3.0).sqrt();
            let arg = (-3.0 * q.abs() / (p * m)).max(1.0);
            vec![-q.signum() * m * (arg.acosh() / 3.0).cosh()]
        } else {
            let m = 2.0 * (p / 3.0).sqrt();
            let arg = 3.0 * q / (p * m);
            vec![-m * (arg.asinh() / 3.0).sinh()]
        }
    };
    s_roots.into_iter().map(|s| s - shift).collect()
}

/// Two Newton steps on the original cubic, kept only when they reduce |f|.
fn polish(mut t: f64, a: f64, b: f64, c: f64, d: f64) -> f64 {
    let f = |t: f64| ((a * t + b) * t + c) * t + d;
    let df = |t: f64| (3.0 * a * t + 2.0 * b) * t + c;
    for _ in 0..2 {
        let slope = df(t);
        if slope == 0.0 {
            break;
        }
        let next = t - f(t) / slope;
        if next.is_finite() && f(next).abs() < f(t).abs() {
            t = next;
        } else {
            break;
        }
    }
    t
}
