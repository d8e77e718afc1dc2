//! First-order eigenvalue systems, their solution operators, monodromies
//! and the periodic Evans function.
//!
//! The eigenvalue problem `(L_ξ − λ)u = 0` is written as `U′ = 𝔸_ξ(x,λ)U`
//! with `U = (u, u′)` and
//! `𝔸_ξ = [[0, I], [λI + C_ξ(x), A_ξ]]`, `A_ξ = −(a+2iξ)I`,
//! `C_ξ = −df(ū(x)) − (iaξ − ξ²)I`.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::linalg::{self, c, cr, C64, CMat, Eigen, I};
use crate::ode::{self, Tolerance};
use crate::profile::WaveProfile;

/// Above this |λ| the auto-rescaled variables `x̄ = |λ|^{1/2} x` are used.
pub const RESCALE_THRESHOLD: f64 = 100.0;

#[derive(Debug, Clone)]
pub struct FloquetSystem<'a> {
    pub profile: &'a WaveProfile,
    pub xi: f64,
    pub lambda: C64,
    pub auto_rescale: bool,
}

#[derive(Debug, Clone)]
pub struct Propagator {
    pub from_y: f64,
    pub to_x: f64,
    pub matrix: CMat,
    pub error_estimate: f64,
}

impl<'a> FloquetSystem<'a> {
    pub fn new(profile: &'a WaveProfile, xi: f64, lambda: C64) -> Self {
        FloquetSystem { profile, xi, lambda, auto_rescale: true }
    }

    pub fn dim(&self) -> usize {
        2 * self.profile.dim()
    }

    /// `A_ξ = −(a + 2iξ)`, the scalar multiple of I.
    pub fn a_xi(&self) -> C64 {
        -(cr(self.profile.speed()) + I * (2.0 * self.xi))
    }

    /// Scalar part of `C_ξ`, i.e. `−(iaξ − ξ²)`.
    pub fn c_xi_shift(&self) -> C64 {
        -(I * (self.profile.speed() * self.xi) - cr(self.xi * self.xi))
    }

    /// `𝔸_ξ(x, λ)`.
    pub fn matrix(&self, x: f64) -> CMat {
        let n = self.profile.dim();
        let df = self.profile.coeff_at(x);
        let mut m = CMat::zeros(2 * n, 2 * n);
        let shift = self.lambda + self.c_xi_shift();
        let ax = self.a_xi();
        for i in 0..n {
            m[(i, n + i)] = cr(1.0);
            m[(n + i, n + i)] = ax;
            for j in 0..n {
                m[(n + i, j)] = -df[(i, j)];
            }
            m[(n + i, i)] += shift;
        }
        m
    }

    fn rescale_factor(&self) -> Option<f64> {
        let mag = self.lambda.norm();
        if self.auto_rescale && mag > RESCALE_THRESHOLD {
            Some(mag.sqrt())
        } else {
            None
        }
    }

    /// Solution operators `ℱ^{y→x}` for every `x` in `xs`. The abscissae must
    /// be monotone moving away from `y` (all ≥ y ascending or all ≤ y
    /// descending).
    pub fn propagate(&self, y: f64, xs: &[f64], tol: f64) -> Result<Vec<Propagator>> {
        let tol = Tolerance::new(tol)?;
        let m = self.dim();
        let n = self.profile.dim();
        let id = CMat::identity(m, m);
        match self.rescale_factor() {
            None => {
                let tr = ode::integrate(|x| self.matrix(x), &id, y, xs, tol)?;
                Ok(tr
                    .xs
                    .iter()
                    .zip(tr.values)
                    .map(|(&x, mat)| Propagator { from_y: y, to_x: x, matrix: mat, error_estimate: tr.error })
                    .collect())
            }
            Some(s) => {
                // W = N U with N = diag(I, I/s); dW/dx̄ = s⁻¹ N 𝔸 N⁻¹ W.
                let coef = |xb: f64| {
                    let mut a = self.matrix(xb / s);
                    for i in 0..n {
                        for j in 0..n {
                            a[(i, n + j)] *= s;
                            a[(n + i, j)] /= s;
                        }
                    }
                    a / cr(s)
                };
                let targets: Vec<f64> = xs.iter().map(|x| x * s).collect();
                let tr = ode::integrate(coef, &id, y * s, &targets, tol)?;
                Ok(xs
                    .iter()
                    .zip(tr.values)
                    .map(|(&x, mut w)| {
                        for i in 0..n {
                            for j in 0..m {
                                w[(n + i, j)] *= s;
                            }
                        }
                        for i in 0..m {
                            for j in 0..n {
                                w[(i, n + j)] /= s;
                            }
                        }
                        Propagator { from_y: y, to_x: x, matrix: w, error_estimate: tr.error }
                    })
                    .collect())
            }
        }
    }

    /// `ℱ_ξ^{y→x}`.
    pub fn solution_operator(&self, y: f64, x: f64, tol: f64) -> Result<Propagator> {
        Ok(self.propagate(y, &[x], tol)?.pop().unwrap())
    }

    /// `ℱ_ξ^{y→y+1}`.
    pub fn monodromy(&self, base_y: f64, tol: f64) -> Result<Propagator> {
        self.solution_operator(base_y, base_y + 1.0, tol)
    }

    /// Floquet multipliers with eigenvectors, sorted by modulus ascending and
    /// then by argument ascending.
    pub fn multipliers(&self, base_y: f64, tol: f64) -> Result<Eigen> {
        let psi = self.monodromy(base_y, tol)?;
        Ok(sort_multipliers(linalg::eig(&psi.matrix)?))
    }
}

/// Sort by modulus ascending, ties (relative 1e-12) by argument ascending.
pub fn sort_multipliers(e: Eigen) -> Eigen {
    e.sorted_by(|a, b| {
        let (ma, mb) = (a.norm(), b.norm());
        if (ma - mb).abs() <= 1e-12 * ma.max(mb) {
            a.arg().partial_cmp(&b.arg()).unwrap_or(Ordering::Equal)
        } else {
            ma.partial_cmp(&mb).unwrap_or(Ordering::Equal)
        }
    })
}

/// Periodic Evans function `D(λ,ξ) = det(Ψ(λ) − e^{iξ}I)` with `Ψ` the
/// monodromy of the ξ = 0 system based at 0.
pub fn evans(profile: &WaveProfile, lambda: C64, xi: f64, tol: f64) -> Result<C64> {
    if xi.abs() > std::f64::consts::PI + 1e-12 {
        return Err(Error::param("xi", "|xi| must not exceed pi"));
    }
    let mut sys = FloquetSystem::new(profile, 0.0, lambda);
    sys.auto_rescale = true;
    let psi = sys.monodromy(0.0, tol)?.matrix;
    let m = psi.nrows();
    let shifted = psi - CMat::identity(m, m) * C64::from_polar(1.0, xi);
    Ok(linalg::det(&shifted))
}

/// Newton iteration on `λ ↦ D(λ,ξ)` with a central-difference derivative.
pub fn evans_root(profile: &WaveProfile, xi: f64, guess: C64, tol: f64) -> Result<C64> {
    let mut z = guess;
    for _ in 0..50 {
        let h = 1e-5 * (1.0 + z.norm());
        let d = evans(profile, z, xi, tol)?;
        let dd = (evans(profile, z + h, xi, tol)? - evans(profile, z - h, xi, tol)?) / (2.0 * h);
        if dd.norm() == 0.0 {
            return Err(Error::NoConvergence(format!("flat Evans function at lambda={z}")));
        }
        let step = d / dd;
        z -= step;
        if step.norm() <= 1e-13 * (1.0 + z.norm()) {
            return Ok(z);
        }
    }
    Err(Error::NoConvergence(format!("Evans root near {guess} after 50 Newton steps")))
}

/// Minimum |D| on the contour below which the winding number is refused.
pub const ZERO_THRESHOLD: f64 = 1e-10;

/// Argument-principle count of Evans zeros enclosed by a closed polyline
/// (vertices in order; the last connects back to the first).
pub fn winding_number(profile: &WaveProfile, xi: f64, contour: &[C64], tol: f64) -> Result<i64> {
    if contour.len() < 3 {
        return Err(Error::param("contour", "need at least 3 vertices"));
    }
    let eval = |z: C64| -> Result<C64> {
        let d = evans(profile, z, xi, tol)?;
        if d.norm() < ZERO_THRESHOLD {
            return Err(Error::ZeroOnContour(d.norm()));
        }
        Ok(d)
    };
    let mut total = 0.0;
    let nv = contour.len();
    let mut d_start = eval(contour[0])?;
    for k in 0..nv {
        let (za, zb) = (contour[k], contour[(k + 1) % nv]);
        let d_end = eval(zb)?;
        total += arg_change(&eval, za, zb, d_start, d_end, 0)?;
        d_start = d_end;
    }
    Ok((total / (2.0 * std::f64::consts::PI)).round() as i64)
}

fn arg_change<F>(eval: &F, za: C64, zb: C64, da: C64, db: C64, depth: u32) -> Result<f64>
where
    F: Fn(C64) -> Result<C64>,
{
    let step = (db / da).arg();
    // A few unconditional bisections guard against swings hidden between vertices.
    if depth >= 3 && step.abs() < std::f64::consts::FRAC_PI_4 {
        return Ok(step);
    }
    if depth > 30 {
        return Err(Error::NoConvergence("winding-number refinement exceeded depth 30".into()));
    }
    let zm = (za + zb) * 0.5;
    let dm = eval(zm)?;
    Ok(arg_change(eval, za, zm, da, dm, depth + 1)? + arg_change(eval, zm, zb, dm, db, depth + 1)?)
}

/// Closed polygonal circle with `m` vertices.
pub fn circle(center: C64, radius: f64, m: usize) -> Vec<C64> {
    (0..m)
        .map(|k| center + C64::from_polar(radius, 2.0 * std::f64::consts::PI * k as f64 / m as f64))
        .collect()
}

/// Spatial eigenvalues `μ±` of the constant scalar system with
/// `L = ∂² − a∂` (`u_t + a u_x = u_xx`): `μ± = (a − 2iξ ± √(a²+4λ))/2`.
pub fn constant_scalar_mu(a: f64, xi: f64, lambda: C64) -> (C64, C64) {
    let root = linalg::csqrt(cr(a * a) + lambda * 4.0);
    let base = c(a, -2.0 * xi);
    ((base - root) * 0.5, (base + root) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{make_constant_profile, manufactured_sine};
    use nalgebra::DMatrix;

    fn heat() -> WaveProfile {
        make_constant_profile(1, 0.0, &DMatrix::zeros(1, 1), 16).unwrap()
    }

    #[test]
    fn constant_scalar_operator() {
        let p = heat();
        let sys = FloquetSystem::new(&p, 0.0, cr(1.0));
        let f = sys.solution_operator(0.0, 1.0, 1e-12).unwrap().matrix;
        let (ch, sh) = (1f64.cosh(), 1f64.sinh());
        assert!((f[(0, 0)] - cr(ch)).norm() < 1e-10 && (f[(0, 1)] - cr(sh)).norm() < 1e-10);
        assert!((f[(1, 0)] - cr(sh)).norm() < 1e-10 && (f[(1, 1)] - cr(ch)).norm() < 1e-10);
        let id = sys.solution_operator(0.3, 0.3, 1e-12).unwrap().matrix;
        assert!(linalg::max_abs(&(id - CMat::identity(2, 2))) < 1e-13);
    }

    #[test]
    fn liouville_determinant() {
        let p = manufactured_sine(0.3, 1.0, 64).unwrap();
        let sys = FloquetSystem::new(&p, 0.7, c(0.4, 1.1));
        let (y, x) = (0.1, 0.85);
        let f = sys.solution_operator(y, x, 1e-11).unwrap().matrix;
        let expect = (-(cr(1.0) + I * 1.4) * (x - y)).exp();
        assert!((linalg::det(&f) - expect).norm() < 1e-8 * expect.norm());
    }

    #[test]
    fn section5_multipliers() {
        for (a, xi, lam) in [(1.0, 0.3, c(1.0, 0.0)), (0.5, -1.2, c(2.0, 3.0))] {
            let p = make_constant_profile(1, -a, &DMatrix::zeros(1, 1), 16).unwrap();
            let sys = FloquetSystem::new(&p, xi, lam);
            let e = sys.multipliers(0.0, 1e-12).unwrap();
            let (mm, mp) = constant_scalar_mu(a, xi, lam);
            let (lo, hi) = (mm.exp(), mp.exp());
            assert!((e.values[0] - lo).norm() < 1e-9 * lo.norm().max(1.0));
            assert!((e.values[1] - hi).norm() < 1e-9 * hi.norm());
        }
    }

    #[test]
    fn evans_closed_forms() {
        let p = heat();
        let d = evans(&p, cr(1.0), 0.0, 1e-12).unwrap();
        let e = std::f64::consts::E;
        assert!((d - cr((e - 1.0) * (1.0 / e - 1.0))).norm() < 1e-9);
        let d = evans(&p, cr(-0.0625), 0.25, 1e-12).unwrap();
        assert!(d.norm() < 1e-8);
    }
}
