//! Fourier–Galerkin truncations of the Bloch operators
//! `L_ξ = (∂+iξ)² + a(∂+iξ) + df(ū)` on 1-periodic functions, diffusive
//! stability checks, and tracking of the critical eigenvalue branch.

use std::cmp::Ordering;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, cr, C64, CMat, CVec, I};
use crate::profile::WaveProfile;

/// Minimum truncation order.
pub const MIN_K: usize = 8;
/// Largest Fourier coefficient of df(ū) allowed to fall outside the
/// convolution band |m| ≤ 2K.
pub const TAIL_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct BlochMatrix {
    pub xi: f64,
    pub k: usize,
    pub n: usize,
    /// Row/column index `(j + K)·n + component` for modes `j = −K..=K`.
    pub matrix: CMat,
}

/// Symbol of `(∂+iξ)² + a(∂+iξ)` on the mode `e^{2πijx}`.
pub fn symbol(a: f64, xi: f64, j: i64) -> C64 {
    let w = I * (2.0 * PI * j as f64 + xi);
    w * w + w * a
}

pub fn bloch_matrix(profile: &WaveProfile, xi: f64, k: usize) -> Result<BlochMatrix> {
    if k < MIN_K {
        return Err(Error::param("K", format!("K >= {MIN_K} required (got {k})")));
    }
    let tail = profile.fourier_tail_beyond(2 * k);
    if tail > TAIL_TOL {
        return Err(Error::param(
            "K",
            format!("K={k} too small: df(u) Fourier tail {tail:.3e} beyond |m|=2K is truncated"),
        ));
    }
    let n = profile.dim();
    let modes = 2 * k + 1;
    let mut m = CMat::zeros(n * modes, n * modes);
    let coeffs: Vec<CMat> = (-(2 * k as i64)..=(2 * k as i64)).map(|d| profile.coeff_fourier(d)).collect();
    for jr in 0..modes {
        for jc in 0..modes {
            let d = jr as i64 - jc as i64;
            let blk = &coeffs[(d + 2 * k as i64) as usize];
            for r in 0..n {
                for c in 0..n {
                    m[(jr * n + r, jc * n + c)] = blk[(r, c)];
                }
            }
        }
        let s = symbol(profile.speed(), xi, jr as i64 - k as i64);
        for r in 0..n {
            m[(jr * n + r, jr * n + r)] += s;
        }
    }
    Ok(BlochMatrix { xi, k, n, matrix: m })
}

/// Eigen-decomposition of a Bloch matrix sorted by descending real part.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub xi: f64,
    pub k: usize,
    pub n: usize,
    pub values: Vec<C64>,
    /// Right eigenvectors (Fourier coefficients) as columns.
    pub vectors: CMat,
    /// Rows: dual eigenvectors with `duals.row(i)·vectors.column(j) = δ_ij`.
    pub duals: CMat,
}

fn cmp_desc_re(a: &C64, b: &C64) -> Ordering {
    b.re.partial_cmp(&a.re).unwrap_or(Ordering::Equal).then(a.im.partial_cmp(&b.im).unwrap_or(Ordering::Equal))
}

pub fn spectrum(profile: &WaveProfile, xi: f64, k: usize) -> Result<Spectrum> {
    let bm = bloch_matrix(profile, xi, k)?;
    let e = linalg::eig(&bm.matrix).map_err(|err| {
        Error::Linalg(format!("{err}; Bloch matrix condition number {:.3e}", linalg::condition_number(&bm.matrix)))
    })?;
    let e = e.sorted_by(cmp_desc_re);
    let duals = e.left().map_err(|_| {
        Error::Linalg(format!("eigenvector matrix singular (condition {:.3e})", e.condition()))
    })?;
    Ok(Spectrum { xi, k, n: bm.n, values: e.values, vectors: e.vectors, duals })
}

impl Spectrum {
    pub fn max_re(&self) -> f64 {
        self.values.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }

    /// L²[0,1] coefficients of the i-th right eigenfunction.
    pub fn mode(&self, i: usize) -> CVec {
        self.vectors.column(i).into_owned()
    }

    /// Coefficients `q̃` of the i-th dual eigenfunction, such that the L²
    /// pairing `⟨q̃_i, q_j⟩ = Σ conj(q̃)·q = δ_ij`.
    pub fn dual_mode(&self, i: usize) -> CVec {
        self.duals.row(i).transpose().map(|z| z.conj())
    }
}

/// `⟨f, g⟩_{L²[0,1]} = Σ conj(f̂)·ĝ` for Fourier coefficient vectors.
pub fn inner(f: &CVec, g: &CVec) -> C64 {
    f.dotc(g)
}

/// Evaluate a Fourier-coefficient vector (layout `(j+K)·n + comp`) at `x`.
pub fn eval_field(coeffs: &CVec, k: usize, n: usize, x: f64) -> CVec {
    let mut out = CVec::zeros(n);
    let w = C64::from_polar(1.0, 2.0 * PI * x);
    let mut pw = C64::from_polar(1.0, -2.0 * PI * x * k as f64);
    for j in 0..(2 * k + 1) {
        for c in 0..n {
            out[c] += coeffs[j * n + c] * pw;
        }
        pw *= w;
    }
    out
}

/// Fourier coefficients (layout `(j+K)·n + comp`) of real samples on the
/// uniform grid, truncated to |j| ≤ K.
pub fn project_samples(samples: &[nalgebra::DVector<f64>], k: usize) -> CVec {
    let n = samples[0].len();
    let nx = samples.len();
    let mut out = CVec::zeros(n * (2 * k + 1));
    for c in 0..n {
        let vals: Vec<f64> = samples.iter().map(|v| v[c]).collect();
        let co = crate::spectral::coefficients(&vals);
        for (idx, kk) in crate::spectral::wavenumbers(nx).into_iter().enumerate() {
            if kk.unsigned_abs() as usize <= k && !(nx % 2 == 0 && idx == nx / 2) {
                out[(kk + k as i64) as usize * n + c] = co[idx];
            }
        }
    }
    out
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct StabilityReport {
    #[serde(rename = "D1")]
    pub d1: bool,
    /// Smallest |λ| of L_0.
    pub lambda0: f64,
    /// Distance from 0 to the next eigenvalue of L_0.
    pub gap: f64,
    #[serde(rename = "D2")]
    pub d2: bool,
    pub theta: f64,
    /// Largest Re σ(L_ξ) over |ξ| ≥ ξ_cut.
    pub max_re_outer: f64,
    pub violating_xi: Option<f64>,
}

pub const XI_CUT: f64 = 0.5;
pub const D1_TOL: f64 = 1e-8;
/// Gap below which the zero eigenvalue is not considered simple.
pub const GAP_TOL: f64 = 1e-6;

pub fn check_diffusive_stability(profile: &WaveProfile, k: usize, xi_samples: usize) -> Result<StabilityReport> {
    if xi_samples < 32 {
        return Err(Error::param("xi_samples", "at least 32 samples of [-pi, pi) required"));
    }
    let s0 = spectrum(profile, 0.0, k)?;
    let mut by_mod: Vec<f64> = s0.values.iter().map(|z| z.norm()).collect();
    by_mod.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lambda0 = by_mod[0];
    let gap = by_mod.get(1).copied().unwrap_or(f64::INFINITY);
    let d1 = lambda0 < D1_TOL && gap > GAP_TOL;
    let xis: Vec<f64> = (0..xi_samples).map(|i| -PI + 2.0 * PI * i as f64 / xi_samples as f64).collect();
    let maxre: Vec<(f64, f64)> = xis
        .par_iter()
        .map(|&xi| spectrum(profile, xi, k).map(|s| (xi, s.max_re())))
        .collect::<Result<Vec<_>>>()?;
    let mut theta = f64::INFINITY;
    let mut theta_xi = None;
    let mut max_re_outer = f64::NEG_INFINITY;
    let mut outer_xi = None;
    for &(xi, mr) in &maxre {
        if xi == 0.0 {
            continue;
        }
        if xi.abs() <= XI_CUT {
            let th = -mr / (xi * xi);
            if th < theta {
                theta = th;
                theta_xi = Some(xi);
            }
        } else if mr > max_re_outer {
            max_re_outer = mr;
            outer_xi = Some(xi);
        }
    }
    let inner_ok = theta > 0.0;
    let outer_ok = max_re_outer < 0.0;
    let violating_xi = if !inner_ok {
        theta_xi
    } else if !outer_ok {
        outer_xi
    } else {
        None
    };
    Ok(StabilityReport { d1, lambda0, gap, d2: inner_ok && outer_ok, theta, max_re_outer, violating_xi })
}

/// How q(·,0) was normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZeroModeSource {
    /// Scaled to equal the stored ū′ samples.
    ProfileDerivative,
    /// Scaled to the manufactured fixture's surrogate zero mode p.
    ManufacturedSurrogate,
    /// No reference available; unit L² norm with a real positive phase.
    UnitNorm,
}

#[derive(Debug, Clone)]
pub struct SpectralBranch {
    pub k: usize,
    pub n: usize,
    pub xi_grid: Vec<f64>,
    pub lambda_values: Vec<C64>,
    pub lambda1: C64,
    pub lambda2: C64,
    pub lambda3: C64,
    /// Max over the grid of |λ(ξ) − λ₁ξ − λ₂ξ²|.
    pub quadratic_residual: f64,
    /// `i·λ₁`.
    pub a_eff: C64,
    /// `−Re λ₂`.
    pub b: f64,
    pub q: Vec<CVec>,
    pub qtilde: Vec<CVec>,
    pub zero_mode_source: ZeroModeSource,
}

impl SpectralBranch {
    pub fn zero_index(&self) -> usize {
        self.xi_grid.iter().position(|&x| x == 0.0).expect("grid contains 0")
    }

    pub fn q0(&self, x: f64) -> CVec {
        eval_field(&self.q[self.zero_index()], self.k, self.n, x)
    }

    pub fn qtilde0(&self, x: f64) -> CVec {
        eval_field(&self.qtilde[self.zero_index()], self.k, self.n, x)
    }
}

/// Least-squares fit of `λ(ξ) ≈ λ₁ξ + λ₂ξ² + λ₃ξ³`.
pub fn fit_branch(xis: &[f64], lams: &[C64]) -> (C64, C64, C64) {
    let m = xis.len();
    let a = CMat::from_fn(m, 3, |i, j| cr(xis[i].powi(j as i32 + 1)));
    let b = CVec::from_iterator(m, lams.iter().copied());
    let svd = a.clone().svd(true, true);
    let sol = svd.solve(&b, 1e-14).expect("svd solve");
    (sol[0], sol[1], sol[2])
}

/// Nearest-neighbour continuation of the eigenvalue through λ(0)=0 on a
/// symmetric grid of `n_xi` points (forced odd) covering [−xi_max, xi_max].
pub fn critical_branch(profile: &WaveProfile, k: usize, xi_max: f64, n_xi: usize) -> Result<SpectralBranch> {
    if n_xi < 3 || xi_max <= 0.0 {
        return Err(Error::param("n_xi", "need at least 3 points and xi_max > 0"));
    }
    let n_xi = if n_xi % 2 == 0 { n_xi + 1 } else { n_xi };
    let half = n_xi / 2;
    let xis: Vec<f64> = (0..n_xi).map(|i| xi_max * (i as f64 - half as f64) / half as f64).collect();
    let s0 = spectrum(profile, 0.0, k)?;
    let (i0, l0) = s0
        .values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
        .map(|(i, z)| (i, *z))
        .unwrap();
    if l0.norm() > D1_TOL {
        return Err(Error::Precondition(format!("(D1) fails: smallest |lambda(L_0)| = {:.3e}", l0.norm())));
    }
    let mut lam = vec![C64::new(0.0, 0.0); n_xi];
    let mut qs = vec![CVec::zeros(0); n_xi];
    let mut qts = vec![CVec::zeros(0); n_xi];
    lam[half] = l0;

    // Reference zero mode q(·,0).
    let mut q0 = s0.mode(i0);
    let mut source = ZeroModeSource::UnitNorm;
    if let Some(zm) = profile.zero_mode() {
        let target = project_samples(zm, k);
        let alpha = inner(&q0, &target) / inner(&q0, &q0);
        q0 *= alpha;
        source = match profile.source() {
            crate::profile::Source::Manufactured => ZeroModeSource::ManufacturedSurrogate,
            _ => ZeroModeSource::ProfileDerivative,
        };
    } else {
        let (imax, _) = q0.iter().enumerate().max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap()).unwrap();
        let ph = q0[imax].conj() / q0[imax].norm();
        q0 *= ph / q0.norm();
    }
    let qt0 = {
        let d = s0.dual_mode(i0);
        let s = inner(&d, &q0);
        d / s.conj()
    };
    qs[half] = q0.clone();
    qts[half] = qt0;

    for dir in [1i64, -1] {
        let mut prev_xi = 0.0;
        let mut prev = l0;
        let mut prev2: Option<(f64, C64)> = None;
        let mut idx = half as i64;
        loop {
            idx += dir;
            if idx < 0 || idx >= n_xi as i64 {
                break;
            }
            let target_xi = xis[idx as usize];
            let (lv, qv, qtv) = continue_to(profile, k, prev_xi, prev, prev2, &q0, target_xi, 0)?;
            prev2 = Some((prev_xi, prev));
            prev_xi = target_xi;
            prev = lv;
            lam[idx as usize] = lv;
            qs[idx as usize] = qv;
            qts[idx as usize] = qtv;
        }
    }
    let (l1, l2, l3) = fit_branch(&xis, &lam);
    let quadratic_residual = xis
        .iter()
        .zip(&lam)
        .map(|(&x, &l)| (l - l1 * x - l2 * x * x).norm())
        .fold(0.0, f64::max);
    Ok(SpectralBranch {
        k,
        n: profile.dim(),
        xi_grid: xis,
        lambda_values: lam,
        lambda1: l1,
        lambda2: l2,
        lambda3: l3,
        quadratic_residual,
        a_eff: I * l1,
        b: -l2.re,
        q: qs,
        qtilde: qts,
        zero_mode_source: source,
    })
}

fn continue_to(
    profile: &WaveProfile,
    k: usize,
    xi_prev: f64,
    lam_prev: C64,
    prev2: Option<(f64, C64)>,
    q_ref: &CVec,
    xi: f64,
    depth: u32,
) -> Result<(C64, CVec, CVec)> {
    let pred = match prev2 {
        Some((x2, l2)) if (xi_prev - x2).abs() > 0.0 => lam_prev + (lam_prev - l2) * ((xi - xi_prev) / (xi_prev - x2)),
        _ => lam_prev,
    };
    let s = spectrum(profile, xi, k)?;
    let mut order: Vec<(usize, f64)> = s.values.iter().enumerate().map(|(i, z)| (i, (z - pred).norm())).collect();
    order.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let (best, d0) = order[0];
    let d1 = order.get(1).map(|o| o.1).unwrap_or(f64::INFINITY);
    let chosen = s.values[best];
    let gap = s
        .values
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(_, z)| (z - chosen).norm())
        .fold(f64::INFINITY, f64::min);
    if gap < GAP_TOL {
        return Err(Error::BranchCollision { xi, gap });
    }
    // Ambiguous choice: the runner-up is nearly as close as the winner.
    if d1 < 2.0 * d0 && depth < 12 {
        let mid = 0.5 * (xi_prev + xi);
        let (lm, _, _) = continue_to(profile, k, xi_prev, lam_prev, prev2, q_ref, mid, depth + 1)?;
        return continue_to(profile, k, mid, lm, Some((xi_prev, lam_prev)), q_ref, xi, depth + 1);
    }
    let mut q = s.mode(best);
    let ov = inner(q_ref, &q);
    if ov.norm() > 0.0 {
        q *= ov.conj() / ov.norm();
    }
    q *= cr(q_ref.norm() / q.norm());
    let d = s.dual_mode(best);
    let qt = &d / inner(&d, &q).conj();
    Ok((chosen, q, qt))
}

/// Real-coefficient matrix from a scalar constant (convenience for fixtures).
pub fn scalar(c: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{make_constant_profile, manufactured_sine};

    #[test]
    fn heat_matrix_is_diagonal() {
        let p = make_constant_profile(1, 0.0, &scalar(0.0), 16).unwrap();
        let bm = bloch_matrix(&p, 0.0, 8).unwrap();
        for r in 0..17 {
            for c in 0..17 {
                let expect = if r == c { -(2.0 * PI * (r as f64 - 8.0)).powi(2) } else { 0.0 };
                assert!((bm.matrix[(r, c)] - cr(expect)).norm() < 1e-12);
            }
        }
        assert!(bloch_matrix(&p, 0.0, 4).is_err());
    }

    #[test]
    fn top_eigenvalues_of_constant_fixtures() {
        let heat = make_constant_profile(1, 0.0, &scalar(0.0), 16).unwrap();
        let s = spectrum(&heat, 0.4, 8).unwrap();
        assert!((s.values[0] - cr(-0.16)).norm() < 1e-12);
        let adv = make_constant_profile(1, -1.0, &scalar(0.0), 16).unwrap();
        let s = spectrum(&adv, 0.4, 8).unwrap();
        assert!((s.values[0] - C64::new(-0.16, -0.4)).norm() < 1e-12);
    }

    #[test]
    fn manufactured_zero_mode() {
        let p = manufactured_sine(0.3, 1.0, 64).unwrap();
        let s = spectrum(&p, 0.0, 16).unwrap();
        let smallest = s.values.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
        assert!(smallest < 1e-8, "{smallest}");
    }

    #[test]
    fn advection_diffusion_branch() {
        let adv = make_constant_profile(1, -1.0, &scalar(0.0), 16).unwrap();
        let br = critical_branch(&adv, 8, 0.1 * PI, 21).unwrap();
        assert!((br.lambda1 - C64::new(0.0, -1.0)).norm() < 1e-10);
        assert!((br.lambda2 - cr(-1.0)).norm() < 1e-10);
        assert!((br.b - 1.0).abs() < 1e-10);
        assert!((br.a_eff - cr(1.0)).norm() < 1e-10);
        let q = br.q0(0.3);
        let qt = br.qtilde0(0.3);
        assert!((q[0] - cr(1.0)).norm() < 1e-12 && (qt[0] - cr(1.0)).norm() < 1e-12);
    }
}
