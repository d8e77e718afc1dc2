//! FFT helpers for uniformly sampled 1-periodic functions.

use std::f64::consts::PI;

use rustfft::FftPlanner;

use crate::linalg::{C64, CMat};

/// In-place forward DFT, `X_k = Σ_j x_j e^{-2πijk/N}`.
pub fn fft(data: &mut [C64]) {
    if data.is_empty() {
        return;
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(data.len()).process(data);
}

/// In-place inverse DFT including the 1/N factor.
pub fn ifft(data: &mut [C64]) {
    if data.is_empty() {
        return;
    }
    let n = data.len();
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(n).process(data);
    let s = 1.0 / n as f64;
    for z in data.iter_mut() {
        *z *= s;
    }
}

/// Integer wavenumbers in FFT storage order; index N/2 holds −N/2.
pub fn wavenumbers(n: usize) -> Vec<i64> {
    (0..n)
        .map(|j| if j < n / 2 { j as i64 } else { j as i64 - n as i64 })
        .collect()
}

/// Fourier coefficients `ĉ_k = (1/N) Σ_j c(x_j) e^{-2πikx_j}` in FFT order.
pub fn coefficients(samples: &[f64]) -> Vec<C64> {
    let mut buf: Vec<C64> = samples.iter().map(|&v| C64::new(v, 0.0)).collect();
    fft(&mut buf);
    let s = 1.0 / samples.len() as f64;
    buf.iter_mut().for_each(|z| *z *= s);
    buf
}

/// `m`-th derivative of a 1-periodic sampled function. The Nyquist mode is
/// dropped for odd orders so that real data stays real.
pub fn derivative(samples: &[f64], order: u32) -> Vec<f64> {
    let n = samples.len();
    let mut buf: Vec<C64> = samples.iter().map(|&v| C64::new(v, 0.0)).collect();
    fft(&mut buf);
    for (j, k) in wavenumbers(n).into_iter().enumerate() {
        if order % 2 == 1 && n % 2 == 0 && j == n / 2 {
            buf[j] = C64::new(0.0, 0.0);
            continue;
        }
        buf[j] *= C64::new(0.0, 2.0 * PI * k as f64).powu(order);
    }
    ifft(&mut buf);
    buf.iter().map(|z| z.re).collect()
}

/// Band-limited interpolant of an n×n matrix-valued periodic function,
/// stored as symmetric coefficients `k = −N/2..=N/2` with the Nyquist term
/// split evenly between ±N/2.
#[derive(Debug, Clone)]
pub struct MatrixInterp {
    half: usize,
    dim: usize,
    hat: Vec<CMat>,
    constant: bool,
}

impl MatrixInterp {
    /// `samples[j]` is the value at `x_j = j/N`.
    pub fn new(samples: &[nalgebra::DMatrix<f64>]) -> Self {
        let n_x = samples.len();
        let dim = samples[0].nrows();
        let half = n_x / 2;
        let mut hat = vec![CMat::zeros(dim, dim); 2 * half + 1];
        for r in 0..dim {
            for c in 0..dim {
                let vals: Vec<f64> = samples.iter().map(|m| m[(r, c)]).collect();
                let co = coefficients(&vals);
                for (j, k) in wavenumbers(n_x).into_iter().enumerate() {
                    if n_x % 2 == 0 && j == half {
                        hat[0][(r, c)] = co[j] * 0.5;
                        hat[2 * half][(r, c)] = co[j] * 0.5;
                    } else {
                        hat[(k + half as i64) as usize][(r, c)] = co[j];
                    }
                }
            }
        }
        let scale = hat.iter().map(crate::linalg::max_abs).fold(0.0, f64::max).max(1e-300);
        let constant = hat
            .iter()
            .enumerate()
            .all(|(i, m)| i == half || crate::linalg::max_abs(m) <= 1e-15 * scale);
        MatrixInterp { half, dim, hat, constant }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    /// Fourier coefficient `ĉ_k`; zero outside the resolved band.
    pub fn coeff(&self, k: i64) -> CMat {
        if k.unsigned_abs() as usize > self.half {
            CMat::zeros(self.dim, self.dim)
        } else {
            self.hat[(k + self.half as i64) as usize].clone()
        }
    }

    /// Largest coefficient modulus with |k| > `kmax`.
    pub fn tail_beyond(&self, kmax: usize) -> f64 {
        (0..self.hat.len())
            .filter(|&i| (i as i64 - self.half as i64).unsigned_abs() as usize > kmax)
            .map(|i| crate::linalg::max_abs(&self.hat[i]))
            .fold(0.0, f64::max)
    }

    /// Evaluate at arbitrary real `x` (1-periodic).
    pub fn eval(&self, x: f64) -> CMat {
        if self.constant {
            return self.hat[self.half].clone();
        }
        let w = C64::from_polar(1.0, 2.0 * PI * x);
        let mut pw = C64::from_polar(1.0, -2.0 * PI * x * self.half as f64);
        let mut out = CMat::zeros(self.dim, self.dim);
        for m in &self.hat {
            out += m * pw;
            pw *= w;
        }
        // Real coefficients give a real interpolant; drop round-off.
        out.map(|z| C64::new(z.re, 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_of_pure_modes_is_exact() {
        let n = 32;
        for k in 1..16i64 {
            let xs: Vec<f64> = (0..n).map(|j| j as f64 / n as f64).collect();
            let s: Vec<f64> = xs.iter().map(|x| (2.0 * PI * k as f64 * x).sin()).collect();
            let d = derivative(&s, 1);
            let d2 = derivative(&s, 2);
            let w = 2.0 * PI * k as f64;
            for (j, x) in xs.iter().enumerate() {
                assert!((d[j] - w * (w * x).cos()).abs() < 1e-12 * w);
                assert!((d2[j] + w * w * (w * x).sin()).abs() < 1e-12 * w * w);
            }
        }
    }

    #[test]
    fn interpolant_reproduces_samples_and_band_limited_values() {
        let n = 16;
        let f = |x: f64| 1.0 + 0.3 * (2.0 * PI * x).sin() + 0.1 * (6.0 * PI * x).cos();
        let samples: Vec<nalgebra::DMatrix<f64>> =
            (0..n).map(|j| nalgebra::DMatrix::from_element(1, 1, f(j as f64 / n as f64))).collect();
        let it = MatrixInterp::new(&samples);
        for x in [0.0, 0.123, 0.5, 0.77, 1.31] {
            assert!((it.eval(x)[(0, 0)].re - f(x)).abs() < 1e-13);
        }
        assert!(!it.is_constant());
        assert!(it.tail_beyond(3) < 1e-15);
    }
}
