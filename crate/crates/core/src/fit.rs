//! Small least-squares helpers for rate and envelope fitting.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    /// Approximate 95% half-width of the slope (2 standard errors).
    pub slope_ci: f64,
    /// Largest absolute residual.
    pub max_residual: f64,
}

/// Ordinary least squares `y ≈ intercept + slope·x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let f = regress(x, y);
    (f.intercept, f.slope)
}

pub fn regress(x: &[f64], y: &[f64]) -> LinearFit {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let res: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - intercept - slope * a).collect();
    let sse: f64 = res.iter().map(|r| r * r).sum();
    let se = if x.len() > 2 && sxx > 0.0 { (sse / (n - 2.0) / sxx).sqrt() } else { f64::INFINITY };
    LinearFit {
        intercept,
        slope,
        slope_ci: 2.0 * se,
        max_residual: res.iter().map(|r| r.abs()).fold(0.0, f64::max),
    }
}

/// Slope of `log v` against `log t`.
pub fn loglog_slope(t: &[f64], v: &[f64]) -> LinearFit {
    let lx: Vec<f64> = t.iter().map(|s| s.ln()).collect();
    let ly: Vec<f64> = v.iter().map(|s| s.ln()).collect();
    regress(&lx, &ly)
}

/// Minimum-norm least-squares solution of `A c ≈ b`.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    a.clone().svd(true, true).solve(b, 1e-14).expect("SVD with both factors")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_power_law() {
        let t: Vec<f64> = (1..50).map(|i| i as f64).collect();
        let v: Vec<f64> = t.iter().map(|s| 3.0 * s.powf(-0.75)).collect();
        let f = loglog_slope(&t, &v);
        assert!((f.slope + 0.75).abs() < 1e-12);
        assert!((f.intercept.exp() - 3.0).abs() < 1e-10);
        assert!(f.slope_ci < 1e-10);
    }
}
