//! Least-squares polynomial fit in a normalized abscissa.
//!
//! Abscissae are mapped affinely onto [-1, 1] before building the Vandermonde
//! matrix, which is then solved by Householder QR.

use serde::{Deserialize, Serialize};

use super::CurveError;

/// Affine map `t = (z - center) / half_width` taking the fit domain onto [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub center: f64,
    pub half_width: f64,
}

impl Normalization {
    pub fn from_domain(z_min: f64, z_max: f64) -> Self {
        Self {
            center: 0.5 * (z_min + z_max),
            half_width: 0.5 * (z_max - z_min),
        }
    }

    #[inline]
    pub fn to_unit(&self, z: f64) -> f64 {
        (z - self.center) / self.half_width
    }

    #[inline]
    pub fn to_mm(&self, t: f64) -> f64 {
        self.center + t * self.half_width
    }
}

/// Horner evaluation of `sum c[k] t^k`.
pub fn eval(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

/// Coefficients of the derivative polynomial.
pub fn derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| k as f64 * c)
        .collect()
}

/// Least-squares coefficients (ascending powers) of a degree-`degree`
/// polynomial through `(t[i], y[i])`.
pub fn least_squares(t: &[f64], y: &[f64], degree: usize) -> Result<Vec<f64>, CurveError> {
    let m = t.len();
    let n = degree + 1;
    if m < n {
        return Err(CurveError::TooFewPoints {
            found: m,
            required: n,
        });
    }
    // Column-major Vandermonde matrix.
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|k| t.iter().map(|&ti| ti.powi(k as i32)).collect())
        .collect();
    let mut b = y.to_vec();

    let scale = a
        .iter()
        .map(|col| col.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let mut diag = vec![0.0; n];
    for k in 0..n {
        let norm = a[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 1e-12 * scale) {
            return Err(CurveError::RankDeficient);
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        // Householder vector v = x - alpha e1, stored in place.
        a[k][k] -= alpha;
        let vnorm2: f64 = a[k][k..].iter().map(|v| v * v).sum();
        let (head, tail) = a.split_at_mut(k + 1);
        let v = &head[k][k..];
        for col in tail.iter_mut() {
            let dot: f64 = v.iter().zip(&col[k..]).map(|(p, q)| p * q).sum();
            let f = 2.0 * dot / vnorm2;
            for (c, p) in col[k..].iter_mut().zip(v) {
                *c -= f * p;
            }
        }
        let dot: f64 = v.iter().zip(&b[k..]).map(|(p, q)| p * q).sum();
        let f = 2.0 * dot / vnorm2;
        for (c, p) in b[k..].iter_mut().zip(v) {
            *c -= f * p;
        }
        diag[k] = alpha;
    }

    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[j][k] * x[j]).sum();
        x[k] = (b[k] - s) / diag[k];
    }
    Ok(x)
}

/// Sum of squared residuals of `coeffs` over the samples.
pub fn residual_ss(coeffs: &[f64], t: &[f64], y: &[f64]) -> f64 {
    t.iter()
        .zip(y)
        .map(|(&ti, &yi)| (yi - eval(coeffs, ti)).powi(2))
        .sum()
}
