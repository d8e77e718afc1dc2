//! Numerical checks of the Gaussian/algebraic convolution bounds used in
//! the nonlinear decay arguments.
//!
//! Each lemma reads `LHS(x,t,…) ≤ C·RHS(x,t,…)` with an unspecified `C`.
//! `C` is fitted as the largest ratio over a fitting set, then a fresh
//! hold-out set must stay within `2·C_fit`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::quadrature::{integrate_line, QuadOptions};

/// Gaussian width parameter in the RHS of the algebraic lemmas.
pub const M_LINEAR: f64 = 4.0;
/// Kernel width in the `|x−wy|` lemmas and its enlarged RHS value.
pub const M_KERNEL: f64 = 2.0;
pub const M_PRIME: f64 = 8.0;
pub const R_VALUES: [f64; 3] = [1.5, 2.5, 3.0];
pub const HOLDOUT_SLACK: f64 = 2.0;
pub const MAX_CONSTANT: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Lemma {
    /// `∫(t−s)^{-1/2}e^{−(x−y)²/(t−s)} s^{-1/2}e^{−y²/s}dy ≤ C t^{-1/2}e^{−x²/t}`.
    GaussianSemigroup,
    /// `∫t^{-1/2}e^{−(x−y)²/t}(1+|y|)^{-r}dy ≤ C[t^{-1/2}∧(1+|x|)^{-r} + (1+√t)^{-1}e^{−x²/(Mt)}]`.
    AlgebraicMin,
    /// Same LHS, RHS `C[(1+|x|+√t)^{-r} + (1+√t)^{-1}e^{−x²/(Mt)}]`.
    AlgebraicEnvelope,
    /// `∫(1+t)^{-1/2}e^{−(x−wy)²/(M(1+t))}(1+|y|)^{-r}dy ≤ C[(1+|x|+√t)^{-r} + (1+t)^{-1/2}e^{−x²/(M'(1+t))}]`.
    ScaledShift,
    /// Nonlinear-source version with `(1+|y|+√s)^{-r}`.
    ScaledShiftSource,
}

pub const ALL_LEMMAS: [Lemma; 5] =
    [Lemma::GaussianSemigroup, Lemma::AlgebraicMin, Lemma::AlgebraicEnvelope, Lemma::ScaledShift, Lemma::ScaledShiftSource];

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Sample {
    pub x: f64,
    pub t: f64,
    pub s: f64,
    pub w: f64,
    pub r: f64,
}

fn draw(rng: &mut ChaCha8Rng) -> Sample {
    let mag = 10f64.powf(rng.gen_range(-2.0..2.0));
    let x = if rng.gen_bool(0.5) { mag } else { -mag };
    let t = 10f64.powf(rng.gen_range(-2.0..3.0));
    let s = t * rng.gen_range(0.01..0.99);
    let w = rng.gen_range(0.01..0.99);
    let r = R_VALUES[rng.gen_range(0..R_VALUES.len())];
    Sample { x, t, s, w, r }
}

fn opts() -> QuadOptions {
    QuadOptions { abs_tol: 1e-300, rel_tol: 1e-9, max_intervals: 20000 }
}

pub fn lhs(lemma: Lemma, p: Sample) -> Result<f64> {
    let Sample { x, t, s, w, r } = p;
    match lemma {
        Lemma::GaussianSemigroup => Ok(semigroup_scaled(p)? * (-x * x / t).exp()),
        Lemma::AlgebraicMin | Lemma::AlgebraicEnvelope => {
            let f = |y: f64| t.powf(-0.5) * (-(x - y).powi(2) / t).exp() * (1.0 + y.abs()).powf(-r);
            let sd = t.sqrt();
            integrate_line(f, &[0.0, x - 5.0 * sd, x, x + 5.0 * sd], opts())
        }
        Lemma::ScaledShift => {
            let m = M_KERNEL * (1.0 + t);
            let f = |y: f64| (1.0 + t).powf(-0.5) * (-(x - w * y).powi(2) / m).exp() * (1.0 + y.abs()).powf(-r);
            let c = x / w;
            let sd = m.sqrt() / w;
            integrate_line(f, &[0.0, c - 5.0 * sd, c, c + 5.0 * sd], opts())
        }
        Lemma::ScaledShiftSource => {
            let m = M_KERNEL * (1.0 + t - s);
            let f = |y: f64| {
                (1.0 + t - s).powf(-0.5) * (-(x - w * y).powi(2) / m).exp() * (1.0 + y.abs() + s.sqrt()).powf(-r)
            };
            let c = x / w;
            let sd = m.sqrt() / w;
            integrate_line(f, &[0.0, c - 5.0 * sd, c, c + 5.0 * sd], opts())
        }
    }
}

/// Semigroup LHS with the factor `e^{−x²/t}` taken out of the integrand,
/// so far-field samples do not underflow.
fn semigroup_scaled(p: Sample) -> Result<f64> {
    let Sample { x, t, s, .. } = p;
    let f = |y: f64| {
        let ex = -(x - y).powi(2) / (t - s) - y * y / s + x * x / t;
        (t - s).powf(-0.5) * s.powf(-0.5) * ex.exp()
    };
    let sd = (s * (t - s) / t).sqrt();
    let c = s * x / t;
    integrate_line(f, &[c - 8.0 * sd, c, c + 8.0 * sd], opts())
}

/// `LHS / RHS` for one sample.
pub fn ratio(lemma: Lemma, p: Sample) -> Result<f64> {
    match lemma {
        Lemma::GaussianSemigroup => Ok(semigroup_scaled(p)? * p.t.sqrt()),
        _ => Ok(lhs(lemma, p)? / rhs(lemma, p)),
    }
}

pub fn rhs(lemma: Lemma, p: Sample) -> f64 {
    let Sample { x, t, s, r, .. } = p;
    let ax = x.abs();
    match lemma {
        Lemma::GaussianSemigroup => t.powf(-0.5) * (-x * x / t).exp(),
        Lemma::AlgebraicMin => {
            t.powf(-0.5).min((1.0 + ax).powf(-r)) + (1.0 + t.sqrt()).recip() * (-x * x / (M_LINEAR * t)).exp()
        }
        Lemma::AlgebraicEnvelope => {
            (1.0 + ax + t.sqrt()).powf(-r) + (1.0 + t.sqrt()).recip() * (-x * x / (M_LINEAR * t)).exp()
        }
        Lemma::ScaledShift => {
            (1.0 + ax + t.sqrt()).powf(-r) + (1.0 + t).powf(-0.5) * (-x * x / (M_PRIME * (1.0 + t))).exp()
        }
        Lemma::ScaledShiftSource => {
            (1.0 + ax + (t - s).sqrt() + s.sqrt()).powf(-r)
                + (1.0 + t - s).powf(-0.5) * (1.0 + s).powf(-(r - 1.0) / 2.0) * (-x * x / (M_PRIME * (1.0 + t))).exp()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaReport {
    pub lemma: Lemma,
    pub fit_samples: usize,
    pub holdout_samples: usize,
    pub c_fit: f64,
    pub holdout_max_ratio: f64,
    pub violations: usize,
    /// Sample attaining the largest ratio.
    pub worst: Sample,
    pub pass: bool,
}

fn ratios(lemma: Lemma, samples: &[Sample]) -> Result<Vec<f64>> {
    samples.par_iter().map(|&p| ratio(lemma, p)).collect()
}

/// Fit and hold-out check for one lemma.
pub fn check_lemma(lemma: Lemma, n: usize, seed: u64) -> Result<LemmaReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fit: Vec<Sample> = (0..n).map(|_| draw(&mut rng)).collect();
    let hold: Vec<Sample> = (0..n).map(|_| draw(&mut rng)).collect();
    let rf = ratios(lemma, &fit)?;
    let rh = ratios(lemma, &hold)?;
    let (iw, c_fit) = rf
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |m, (i, v)| if v > m.1 { (i, v) } else { m });
    let holdout_max = rh.iter().copied().fold(0.0, f64::max);
    let violations = rh.iter().filter(|&&v| !(v <= HOLDOUT_SLACK * c_fit)).count();
    let pass = violations == 0 && c_fit.is_finite() && c_fit <= MAX_CONSTANT;
    Ok(LemmaReport {
        lemma,
        fit_samples: n,
        holdout_samples: n,
        c_fit,
        holdout_max_ratio: holdout_max,
        violations,
        worst: fit[iw],
        pass,
    })
}

pub fn inequality_suite(n: usize, seed: u64) -> Result<Vec<LemmaReport>> {
    ALL_LEMMAS
        .iter()
        .enumerate()
        .map(|(i, &l)| check_lemma(l, n, seed.wrapping_add(i as u64)))
        .collect()
}

/// Closed form of the Gaussian semigroup LHS: `√π t^{-1/2} e^{−x²/t}`.
pub fn gaussian_semigroup_exact(x: f64, t: f64) -> f64 {
    PI.sqrt() * t.powf(-0.5) * (-x * x / t).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn semigroup_lhs_closed_form() {
        for &(x, t, s) in &[(0.0, 2.0, 1.0), (1.3, 5.0, 0.7), (-4.0, 10.0, 9.0)] {
            let v = lhs(Lemma::GaussianSemigroup, Sample { x, t, s, w: 0.5, r: 2.0 }).unwrap();
            let e = gaussian_semigroup_exact(x, t);
            assert!((v - e).abs() <= 1e-8 * e, "{v} {e}");
        }
    }
}
