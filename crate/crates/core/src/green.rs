//! Time-domain Green function `G(x,t;y)` of `u_t = Lu` and its heat-kernel
//! leading term.
//!
//! Bloch synthesis uses trapezoidal quadrature in ξ with `n_xi` nodes. That
//! is exactly the Green function on a ring of `n_xi` unit cells, so
//! `n_xi = 1` gives the 1-periodic (method-of-images) kernel and large
//! `n_xi` the whole-line kernel up to wrap-around of size `e^{-n_xi²/(16bt)}`.
//! All fields are sampled at `x` on the ring grid (`nc` points per cell,
//! centred on 0) and `y` on a grid of the base cell `[0,1)`.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::bloch::{self, SpectralBranch};
use crate::error::{Error, Result};
use crate::floquet::FloquetSystem;
use crate::linalg::{self, cr, C64, CMat, ExpPropagator, I};
use crate::profile::WaveProfile;
use crate::resolvent::FloquetBasis;

/// Smallest time accepted by the Bloch route.
pub const T_MIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    BlochQuadrature,
    LaplaceContour,
    DirectEvolution,
}

/// Route choice by regime: Bloch quadrature loses accuracy to cancellation
/// when `|x−y|/t` is large.
pub fn route_for(x: f64, y: f64, t: f64) -> Route {
    if t < T_MIN || (x - y).abs() / t > 10.0 {
        Route::LaplaceContour
    } else {
        Route::BlochQuadrature
    }
}

#[derive(Debug, Clone)]
pub struct GreenField {
    pub t: f64,
    pub n: usize,
    pub route: Route,
    /// Number of unit cells on the ring.
    pub ring: usize,
    /// Grid points per unit cell.
    pub nc: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Width of the Gaussian used in place of δ_y (direct route only).
    pub mollifier: Option<f64>,
    data: Vec<C64>,
}

impl GreenField {
    fn zeros(t: f64, n: usize, route: Route, ring: usize, nc: usize, ys: Vec<f64>) -> Self {
        let nt = ring * nc;
        let xs = (0..nt).map(|i| (i as f64 - (nt / 2) as f64) / nc as f64).collect();
        let data = vec![C64::new(0.0, 0.0); ys.len() * nt * n * n];
        GreenField { t, n, route, ring, nc, xs, ys, mollifier: None, data }
    }

    #[inline]
    fn idx(&self, ix: usize, iy: usize, r: usize, c: usize) -> usize {
        ((iy * self.xs.len() + ix) * self.n + r) * self.n + c
    }

    #[inline]
    pub fn entry(&self, ix: usize, iy: usize, r: usize, c: usize) -> C64 {
        self.data[self.idx(ix, iy, r, c)]
    }

    pub fn block(&self, ix: usize, iy: usize) -> CMat {
        CMat::from_fn(self.n, self.n, |r, c| self.entry(ix, iy, r, c))
    }

    /// Index of the sample nearest to `x` (exact on grid points).
    pub fn x_index(&self, x: f64) -> Option<usize> {
        let nt = self.xs.len() as f64;
        let i = (x * self.nc as f64).round() + (nt / 2.0).floor();
        if i < 0.0 || i >= nt {
            None
        } else {
            Some(i as usize)
        }
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.nc as f64
    }

    /// Largest |Im G|.
    pub fn max_imag(&self) -> f64 {
        self.data.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `∫ G(x,t;y_j) dx` per column and component pair.
    pub fn column_mass(&self, iy: usize, r: usize, c: usize) -> C64 {
        (0..self.xs.len()).map(|ix| self.entry(ix, iy, r, c)).sum::<C64>() * self.dx()
    }

    pub fn map_entries<F: Fn(usize, usize, usize, usize, C64) -> C64>(&self, f: F) -> GreenField {
        let mut out = self.clone();
        for iy in 0..self.ys.len() {
            for ix in 0..self.xs.len() {
                for r in 0..self.n {
                    for c in 0..self.n {
                        let k = self.idx(ix, iy, r, c);
                        out.data[k] = f(ix, iy, r, c, self.data[k]);
                    }
                }
            }
        }
        out
    }

    pub fn raw(&self) -> &[C64] {
        &self.data
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BlochParams {
    /// Galerkin truncation order.
    pub k: usize,
    /// Trapezoidal ξ nodes (= ring length in cells).
    pub n_xi: usize,
    /// Output grid points per cell; must be ≥ 2K+1.
    pub nc: usize,
    /// Number of base points y in [0,1).
    pub ny: usize,
}

impl Default for BlochParams {
    fn default() -> Self {
        BlochParams { k: 16, n_xi: 256, nc: 64, ny: 16 }
    }
}

/// Quadrature nodes `ξ_m = 2πm/P`, `m = −⌊P/2⌋..⌈P/2⌉−1`.
pub fn xi_nodes(p: usize) -> Vec<f64> {
    let lo = -((p / 2) as i64);
    (0..p as i64).map(|i| 2.0 * PI * (lo + i) as f64 / p as f64).collect()
}

fn uniform(ny: usize) -> Vec<f64> {
    (0..ny).map(|j| j as f64 / ny as f64).collect()
}

/// Which quantity to synthesize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    G,
    /// `∂_y G`.
    Gy,
}

/// Bloch-quadrature synthesis at several times sharing one set of
/// per-ξ propagators.
pub fn green_bloch_multi(profile: &WaveProfile, times: &[f64], params: BlochParams, kernel: Kernel) -> Result<Vec<GreenField>> {
    for &t in times {
        if !(t >= T_MIN) {
            return Err(Error::Precondition(format!(
                "t = {t} below t_min = {T_MIN}: Bloch quadrature suffers cancellation; use the Laplace or direct route"
            )));
        }
    }
    let k = params.k;
    let modes = 2 * k + 1;
    if params.nc < modes {
        return Err(Error::param("nc", format!("need at least 2K+1 = {modes} points per cell")));
    }
    if params.n_xi == 0 || params.ny == 0 {
        return Err(Error::param("n_xi", "must be positive"));
    }
    let n = profile.dim();
    let p = params.n_xi;
    let nt = p * params.nc;
    let xis = xi_nodes(p);
    let props: Vec<ExpPropagator> = xis
        .par_iter()
        .map(|&xi| bloch::bloch_matrix(profile, xi, k).map(|bm| ExpPropagator::new(&bm.matrix)))
        .collect::<Result<Vec<_>>>()?;
    let ys = uniform(params.ny);
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_inverse(nt);
    let mut fields = Vec::with_capacity(times.len());
    for &t in times {
        let exps: Vec<CMat> = props.par_iter().map(|pr| pr.exp(t)).collect();
        let mut field = GreenField::zeros(t, n, Route::BlochQuadrature, p, params.nc, ys.clone());
        let columns: Vec<Vec<C64>> = ys
            .par_iter()
            .map(|&y| {
                // out[(r,c)][p] for one base point.
                let mut bufs = vec![vec![C64::new(0.0, 0.0); nt]; n * n];
                for (m, (&xi, e)) in xis.iter().zip(&exps).enumerate() {
                    let lo = -((p / 2) as i64) + m as i64;
                    for col in 0..n {
                        // Coefficients of the periodized δ_y e_col (or its y-derivative).
                        let rhs = CMat::from_fn(n * modes, 1, |row, _| {
                            if row % n != col {
                                return C64::new(0.0, 0.0);
                            }
                            let j = (row / n) as f64 - k as f64;
                            let eta = xi + 2.0 * PI * j;
                            let ph = C64::from_polar(1.0, -eta * y);
                            match kernel {
                                Kernel::G => ph,
                                Kernel::Gy => ph * (-I * eta),
                            }
                        });
                        let cvec = e * rhs;
                        for jm in 0..modes {
                            let j = jm as i64 - k as i64;
                            let q = lo + j * p as i64;
                            let slot = q.rem_euclid(nt as i64) as usize;
                            for r in 0..n {
                                bufs[r * n + col][slot] += cvec[(jm * n + r, 0)] / p as f64;
                            }
                        }
                    }
                }
                for b in bufs.iter_mut() {
                    fft.process(b);
                }
                let mut out = vec![C64::new(0.0, 0.0); nt * n * n];
                for ix in 0..nt {
                    let pidx = (ix as i64 - (nt / 2) as i64).rem_euclid(nt as i64) as usize;
                    for rc in 0..n * n {
                        out[ix * n * n + rc] = bufs[rc][pidx];
                    }
                }
                out
            })
            .collect();
        for (iy, col) in columns.into_iter().enumerate() {
            let base = iy * nt * n * n;
            field.data[base..base + nt * n * n].copy_from_slice(&col);
        }
        fields.push(field);
    }
    Ok(fields)
}

pub fn green_bloch(profile: &WaveProfile, t: f64, params: BlochParams) -> Result<GreenField> {
    Ok(green_bloch_multi(profile, &[t], params, Kernel::G)?.pop().unwrap())
}

/// Max change of the field on the common window when `n_xi` is doubled,
/// relative to its maximum; above 1e-5 the quadrature is reported as not
/// converged.
pub fn bloch_quadrature_check(profile: &WaveProfile, t: f64, params: BlochParams) -> Result<f64> {
    let a = green_bloch(profile, t, params)?;
    let b = green_bloch(profile, t, BlochParams { n_xi: 2 * params.n_xi, ..params })?;
    let d = max_difference(&a, &b)? / a.max_abs();
    if d > 1e-5 {
        return Err(Error::NoConvergence(format!("doubling n_xi changed G by {d:.3e} (relative)")));
    }
    Ok(d)
}

fn common_window(a: &GreenField, b: &GreenField) -> Result<Vec<(usize, usize)>> {
    if a.nc != b.nc || a.ys.len() != b.ys.len() || a.n != b.n {
        return Err(Error::Dimension("fields must share nc, ys and n".into()));
    }
    Ok((0..a.xs.len()).filter_map(|ia| b.x_index(a.xs[ia]).map(|ib| (ia, ib))).collect())
}

pub fn max_difference(a: &GreenField, b: &GreenField) -> Result<f64> {
    let win = common_window(a, b)?;
    let mut d = 0.0f64;
    for iy in 0..a.ys.len() {
        for &(ia, ib) in &win {
            for r in 0..a.n {
                for c in 0..a.n {
                    d = d.max((a.entry(ia, iy, r, c) - b.entry(ib, iy, r, c)).norm());
                }
            }
        }
    }
    Ok(d)
}

/// `Σ|a − b| / Σ|a|` over the common x window and all y columns.
pub fn relative_l1(a: &GreenField, b: &GreenField) -> Result<f64> {
    let win = common_window(a, b)?;
    let (mut num, mut den) = (0.0, 0.0);
    for iy in 0..a.ys.len() {
        for &(ia, ib) in &win {
            for r in 0..a.n {
                for c in 0..a.n {
                    let (va, vb) = (a.entry(ia, iy, r, c), b.entry(ib, iy, r, c));
                    num += (va - vb).norm();
                    den += va.norm();
                }
            }
        }
    }
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DirectParams {
    /// Ring length in cells.
    pub ring: usize,
    pub nc: usize,
    pub dt: f64,
    /// Gaussian mollifier width standing in for δ_y.
    pub sigma: f64,
    pub ny: usize,
}

impl Default for DirectParams {
    fn default() -> Self {
        DirectParams { ring: 64, nc: 128, dt: 4e-4, sigma: 1.0 / 64.0, ny: 16 }
    }
}

/// Strang splitting stepper for `u_t = u_xx + a u_x + df(ū(x)) u` on a ring.
pub struct LinearStepper {
    n: usize,
    nt: usize,
    /// Per-cell half-step reaction propagators `exp(df(x_i) dt/2)`.
    half: Vec<CMat>,
    /// Fourier multiplier `exp(((iη)² + a iη) dt)` in FFT order.
    mult: Vec<C64>,
    nc: usize,
    fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl LinearStepper {
    pub fn new(profile: &WaveProfile, ring: usize, nc: usize, dt: f64) -> Result<Self> {
        let n = profile.dim();
        let max_df = (0..nc).map(|i| linalg::max_abs(&profile.coeff_at(i as f64 / nc as f64))).fold(0.0, f64::max);
        if dt * max_df * n as f64 > 0.25 {
            return Err(Error::Precondition(format!(
                "dt = {dt} too large for the reaction splitting: need dt*max|df| <= 0.25 (max|df| = {max_df:.3})"
            )));
        }
        let nt = ring * nc;
        let len = ring as f64;
        let half = (0..nc)
            .map(|i| linalg::expm(&(profile.coeff_at(i as f64 / nc as f64) * cr(0.5 * dt))))
            .collect();
        let a = profile.speed();
        let mult = crate::spectral::wavenumbers(nt)
            .into_iter()
            .map(|q| {
                let eta = 2.0 * PI * q as f64 / len;
                (cr(-eta * eta) + I * (a * eta)).scale(dt).exp()
            })
            .collect();
        let mut planner = FftPlanner::new();
        Ok(LinearStepper { n, nt, half, mult, nc, fwd: planner.plan_fft_forward(nt), inv: planner.plan_fft_inverse(nt) })
    }

    fn react(&self, u: &mut [Vec<C64>]) {
        let n = self.n;
        let mut tmp = vec![C64::new(0.0, 0.0); n];
        for i in 0..self.nt {
            let m = &self.half[i % self.nc];
            for r in 0..n {
                tmp[r] = (0..n).map(|c| m[(r, c)] * u[c][i]).sum();
            }
            for r in 0..n {
                u[r][i] = tmp[r];
            }
        }
    }

    /// One Strang step on `u[component][grid]`; the grid starts at x = −ring/2.
    pub fn step(&self, u: &mut [Vec<C64>]) {
        self.react(u);
        let s = 1.0 / self.nt as f64;
        for comp in u.iter_mut() {
            self.fwd.process(comp);
            for (v, m) in comp.iter_mut().zip(&self.mult) {
                *v *= m * s;
            }
            self.inv.process(comp);
        }
        self.react(u);
    }
}

/// `e^{Lτ}` on a ring of `ring` cells sampled with `nc` points per cell,
/// applied exactly per Bloch block: ring mode `η = ξ_m + 2πj` belongs to
/// quasi-momentum `ξ_m = 2πm/ring`, and modes with `|j| > K` are dropped.
pub struct RingPropagator {
    n: usize,
    ring: usize,
    nt: usize,
    k: usize,
    blocks: Vec<CMat>,
    fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl RingPropagator {
    pub fn new(profile: &WaveProfile, ring: usize, nc: usize, k: usize, tau: f64) -> Result<Self> {
        if nc < 2 * k + 1 {
            return Err(Error::param("nc", format!("need at least 2K+1 = {} points per cell", 2 * k + 1)));
        }
        let blocks = xi_nodes(ring)
            .par_iter()
            .map(|&xi| bloch::bloch_matrix(profile, xi, k).map(|bm| linalg::expm(&(bm.matrix * cr(tau)))))
            .collect::<Result<Vec<_>>>()?;
        let nt = ring * nc;
        let mut planner = FftPlanner::new();
        Ok(RingPropagator {
            n: profile.dim(),
            ring,
            nt,
            k,
            blocks,
            fwd: planner.plan_fft_forward(nt),
            inv: planner.plan_fft_inverse(nt),
        })
    }

    /// Map from block `(m, j)` to the FFT slot of mode `2π(m_lo+m)/ring + 2πj`.
    fn slot(&self, m: usize, j: i64) -> usize {
        let q = -((self.ring / 2) as i64) + m as i64 + j * self.ring as i64;
        q.rem_euclid(self.nt as i64) as usize
    }

    /// Apply to `u[component][grid]`.
    pub fn apply(&self, u: &mut [Vec<C64>]) {
        let n = self.n;
        let modes = 2 * self.k + 1;
        for comp in u.iter_mut() {
            self.fwd.process(comp);
        }
        let mut out = vec![vec![C64::new(0.0, 0.0); self.nt]; n];
        let mut v = CMat::zeros(modes * n, 1);
        for (m, b) in self.blocks.iter().enumerate() {
            for jm in 0..modes {
                let s = self.slot(m, jm as i64 - self.k as i64);
                for c in 0..n {
                    v[(jm * n + c, 0)] = u[c][s];
                }
            }
            let w = b * &v;
            for jm in 0..modes {
                let s = self.slot(m, jm as i64 - self.k as i64);
                for c in 0..n {
                    out[c][s] = w[(jm * n + c, 0)] / self.nt as f64;
                }
            }
        }
        for (comp, o) in u.iter_mut().zip(out) {
            *comp = o;
            self.inv.process(comp);
        }
    }
}

/// Columns of G from evolving Gaussian approximations of δ_y.
pub fn green_direct(profile: &WaveProfile, times: &[f64], params: DirectParams) -> Result<Vec<GreenField>> {
    let mut sorted = times.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if sorted.first().map_or(true, |&t| t <= 0.0) {
        return Err(Error::param("t", "times must be positive"));
    }
    if params.ring % 2 != 0 {
        return Err(Error::param("ring", "ring length must be even so the cell grid aligns"));
    }
    let n = profile.dim();
    let nt = params.ring * params.nc;
    let ys = uniform(params.ny);
    let x0 = -((params.ring / 2) as f64);
    let h = 1.0 / params.nc as f64;
    // Plan the step sequence so every requested time is hit exactly.
    let mut plan: Vec<(usize, f64)> = Vec::new();
    let mut prev = 0.0;
    for &t in &sorted {
        let steps = ((t - prev) / params.dt).ceil().max(1.0) as usize;
        plan.push((steps, (t - prev) / steps as f64));
        prev = t;
    }
    let mut steppers: Vec<(f64, LinearStepper)> = Vec::new();
    for &(_, dt) in &plan {
        if !steppers.iter().any(|(d, _)| *d == dt) {
            steppers.push((dt, LinearStepper::new(profile, params.ring, params.nc, dt)?));
        }
    }
    let sig = params.sigma;
    let cols: Vec<Vec<Vec<Vec<C64>>>> = ys
        .par_iter()
        .flat_map_iter(|&y| (0..n).map(move |c| (y, c)))
        .map(|(y, col)| {
            let mut u = vec![vec![C64::new(0.0, 0.0); nt]; n];
            for i in 0..nt {
                let x = x0 + i as f64 * h;
                let d = x - y;
                // Periodized on the ring.
                let d = d - params.ring as f64 * (d / params.ring as f64).round();
                u[col][i] = cr((-d * d / (2.0 * sig * sig)).exp() / (2.0 * PI * sig * sig).sqrt());
            }
            // Unit discrete mass, so widths below the grid spacing still
            // represent δ_y.
            let norm0: f64 = u[col].iter().map(|z| z.norm()).sum::<f64>() * h;
            for v in u[col].iter_mut() {
                *v /= norm0;
            }
            let norm0 = 1.0;
            let mut snaps = Vec::with_capacity(plan.len());
            for &(steps, dt) in &plan {
                let st = &steppers.iter().find(|(d, _)| *d == dt).expect("stepper for planned dt").1;
                for _ in 0..steps {
                    st.step(&mut u);
                }
                let nrm: f64 = u.iter().flat_map(|c| c.iter()).map(|z| z.norm()).sum::<f64>() * h;
                if !(nrm <= 1e6 * norm0) {
                    return Err(Error::NoConvergence(format!("direct evolution unstable: L1 norm grew to {nrm:.3e}")));
                }
                snaps.push(u.clone());
            }
            Ok(snaps)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(sorted.len());
    for (ti, &t) in sorted.iter().enumerate() {
        let mut f = GreenField::zeros(t, n, Route::DirectEvolution, params.ring, params.nc, ys.clone());
        f.mollifier = Some(sig);
        for iy in 0..ys.len() {
            for col in 0..n {
                let snap = &cols[iy * n + col][ti];
                for ix in 0..nt {
                    for r in 0..n {
                        let k = f.idx(ix, iy, r, col);
                        f.data[k] = snap[r][ix];
                    }
                }
            }
        }
        out.push(f);
    }
    // Return in the caller's order.
    Ok(times
        .iter()
        .map(|t| out.iter().find(|f| f.t == *t).unwrap().clone())
        .collect())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ContourParams {
    /// Apex offset: the contour is `λ(u) = σ + μ(iu+1)²`.
    pub sigma: f64,
    pub mu: f64,
    /// Trapezoidal nodes in u (≥ 64).
    pub nodes: usize,
    /// ξ nodes for the Bloch integral of the resolvent kernel.
    pub n_xi: usize,
    pub tol: f64,
}

impl Default for ContourParams {
    fn default() -> Self {
        ContourParams { sigma: 0.5, mu: 1.0, nodes: 128, n_xi: 32, tol: 1e-10 }
    }
}

/// Resolvent kernels larger than this signal a contour too close to the
/// spectrum.
pub const RESOLVENT_BLOWUP: f64 = 1e8;

/// Inverse-Laplace evaluation `G = −(1/2πi)∫_Γ e^{λt} G_λ dλ` at the given
/// `(x, y)` pairs, with `G_λ = (1/n_xi) Σ_ξ e^{iξ(x−y)} G_{ξ,λ}`.
pub fn green_laplace(profile: &WaveProfile, t: f64, pairs: &[(f64, f64)], params: ContourParams) -> Result<Vec<CMat>> {
    if params.nodes < 64 {
        return Err(Error::param("nodes", "contour needs at least 64 nodes"));
    }
    if !(t > 0.0) || !(params.mu > 0.0) {
        return Err(Error::param("t", "t and mu must be positive"));
    }
    let a = profile.speed();
    if params.mu <= a * a / 4.0 {
        return Err(Error::param("mu", format!("must exceed a^2/4 = {} so the contour clears the spectrum", a * a / 4.0)));
    }
    let n = profile.dim();
    let umax = (40.0 / (params.mu * t)).sqrt();
    let h = 2.0 * umax / (params.nodes - 1) as f64;
    let us: Vec<f64> = (0..params.nodes).map(|i| -umax + i as f64 * h).collect();
    let xis = xi_nodes(params.n_xi);
    let mut by_y: std::collections::BTreeMap<u64, Vec<usize>> = std::collections::BTreeMap::new();
    for (i, &(_, y)) in pairs.iter().enumerate() {
        by_y.entry(y.rem_euclid(1.0).to_bits()).or_default().push(i);
    }
    let groups: Vec<(f64, Vec<usize>)> = by_y.into_iter().map(|(k, v)| (f64::from_bits(k), v)).collect();
    let tasks: Vec<(f64, f64, usize)> = us
        .iter()
        .flat_map(|&u| xis.iter().enumerate().map(move |(m, &xi)| (u, xi, m)))
        .collect();
    let partial: Vec<Vec<CMat>> = tasks
        .par_iter()
        .map(|&(u, xi, _)| {
            let w = C64::new(1.0, u);
            let lam = cr(params.sigma) + w * w * params.mu;
            let dlam = I * w * (2.0 * params.mu);
            let weight = -(lam * t).exp() * dlam * h / (2.0 * PI * I) / params.n_xi as f64;
            let sys = FloquetSystem::new(profile, xi, lam);
            let mut acc = vec![CMat::zeros(n, n); pairs.len()];
            for (y0, idxs) in &groups {
                let offs: Vec<f64> = idxs.iter().map(|&i| (pairs[i].0 - y0).rem_euclid(1.0)).collect();
                let basis = FloquetBasis::new(&sys, *y0, &offs, params.tol, true).map_err(|e| {
                    Error::Precondition(format!("contour too close to the spectrum at lambda={lam}: {e}"))
                })?;
                for &i in idxs {
                    let (x, y) = pairs[i];
                    let g = basis.periodic(x.rem_euclid(1.0))?.rows(0, n).into_owned();
                    if linalg::max_abs(&g) > RESOLVENT_BLOWUP {
                        return Err(Error::Precondition(format!("resolvent blow-up at lambda={lam}")));
                    }
                    acc[i] = g * (C64::from_polar(1.0, xi * (x - y)) * weight);
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![CMat::zeros(n, n); pairs.len()];
    for part in partial {
        for (o, p) in out.iter_mut().zip(part) {
            *o += p;
        }
    }
    Ok(out)
}

/// Discrete kernel product `∫ G(x,t₂;z) G(z,t₁;y) dz` over the ring, using
/// `G(x, t; z₀+j) = G(x−j, t; z₀)`. Both fields must come from the same
/// ring with `ny = nc` so that z covers every grid point.
pub fn compose(g2: &GreenField, g1: &GreenField) -> Result<GreenField> {
    if g1.ring != g2.ring || g1.nc != g2.nc || g1.ys.len() != g1.nc || g2.ys.len() != g2.nc || g1.n != g2.n {
        return Err(Error::Dimension("composition needs two fields on the same ring with ny = nc".into()));
    }
    let n = g1.n;
    let nt = g1.xs.len();
    let nc = g1.nc;
    let h = g1.dx();
    let mut out = GreenField::zeros(g1.t + g2.t, n, g1.route, g1.ring, nc, g1.ys.clone());
    let cols: Vec<Vec<C64>> = (0..g1.ys.len())
        .into_par_iter()
        .map(|iy| {
            let mut col = vec![C64::new(0.0, 0.0); nt * n * n];
            for iz in 0..nt {
                // z = xs[iz] = z0 + j with z0 on the cell grid.
                let zi = iz as i64 - (nt / 2) as i64;
                let z0 = zi.rem_euclid(nc as i64) as usize;
                let j = zi.div_euclid(nc as i64);
                let b = g1.block(iz, iy);
                if linalg::max_abs(&b) == 0.0 {
                    continue;
                }
                for ix in 0..nt {
                    let shifted = (ix as i64 - j * nc as i64).rem_euclid(nt as i64) as usize;
                    for r in 0..n {
                        for c in 0..n {
                            let mut s = C64::new(0.0, 0.0);
                            for m in 0..n {
                                s += g2.entry(shifted, z0, r, m) * b[(m, c)];
                            }
                            col[(ix * n + r) * n + c] += s * h;
                        }
                    }
                }
            }
            col
        })
        .collect();
    for (iy, col) in cols.into_iter().enumerate() {
        let base = iy * nt * n * n;
        out.data[base..base + nt * n * n].copy_from_slice(&col);
    }
    Ok(out)
}

/// Heat-kernel leading term `E = (4πbt)^{-1/2} e^{−(x−y−at)²/(4bt)} q(x,0) q̃(y,0)*`.
pub fn leading_term(branch: &SpectralBranch, x: f64, t: f64, y: f64) -> CMat {
    let a = branch.a_eff.re;
    let b = branch.b;
    let z = x - y - a * t;
    let g = (-z * z / (4.0 * b * t)).exp() / (4.0 * PI * b * t).sqrt();
    let q = branch.q0(x);
    let qt = branch.qtilde0(y);
    q * qt.adjoint() * cr(g)
}

/// `∂_y` of the leading term (y enters the Gaussian and q̃).
pub fn leading_term_dy(branch: &SpectralBranch, x: f64, t: f64, y: f64) -> CMat {
    let hstep = 1e-5;
    (leading_term(branch, x, t, y + hstep) - leading_term(branch, x, t, y - hstep)) / cr(2.0 * hstep)
}

pub fn residual_field(field: &GreenField, branch: &SpectralBranch) -> GreenField {
    let n = field.n;
    let mut cache: Vec<CMat> = Vec::with_capacity(field.xs.len() * field.ys.len());
    for &y in &field.ys {
        for &x in &field.xs {
            cache.push(leading_term(branch, x, field.t, y));
        }
    }
    let nx = field.xs.len();
    let _ = n;
    field.map_entries(|ix, iy, r, c, v| v - cache[iy * nx + ix][(r, c)])
}

#[derive(Debug, Clone, Serialize)]
pub struct LeadingTermSplit {
    pub a: f64,
    pub b: f64,
    #[serde(rename = "C_res")]
    pub c_res: f64,
    #[serde(rename = "M_res")]
    pub m_res: f64,
    /// Root-mean-square residual of the envelope fit (log units).
    pub scatter: f64,
    /// Log-log slope of `sup|G−E|(t)`.
    pub slope: f64,
    pub times: Vec<f64>,
    pub sup_residual: Vec<f64>,
    /// `sup|G − E|` relative to `sup|G|` per time.
    pub relative_residual: Vec<f64>,
    /// Residual identically zero to round-off (constant-coefficient fixtures).
    pub exact: bool,
}

/// Values below this fraction of the largest residual are treated as
/// round-off and excluded from the envelope fit.
pub const ENVELOPE_FLOOR: f64 = 1e-9;

/// Subtract E from each field and fit the Gaussian envelope
/// `|G − E| ≲ C (1+t)^{-1} e^{−(x−y−at)²/(M t)}`.
pub fn leading_split(fields: &[GreenField], branch: &SpectralBranch) -> Result<LeadingTermSplit> {
    if !(branch.b > 0.0) {
        return Err(Error::Precondition(format!("branch has b = {} <= 0", branch.b)));
    }
    let a = branch.a_eff.re;
    let b = branch.b;
    let mut times = Vec::new();
    let mut sups = Vec::new();
    let mut rel = Vec::new();
    let mut rows_x = Vec::new();
    let mut rows_y = Vec::new();
    let mut global_max = 0.0f64;
    let residuals: Vec<GreenField> = fields.iter().map(|f| residual_field(f, branch)).collect();
    for (f, r) in fields.iter().zip(&residuals) {
        let s = r.max_abs();
        times.push(f.t);
        sups.push(s);
        rel.push(s / f.max_abs());
        global_max = global_max.max(s / f.max_abs());
    }
    let exact = global_max <= 1e-12;
    let mut scatter = 0.0;
    let (mut c_res, mut m_res) = (0.0, f64::INFINITY);
    if !exact {
        for (f, r) in fields.iter().zip(&residuals) {
            let t = f.t;
            let width = (b * t).sqrt();
            let zmax = 4.0 * width;
            let nb = 32usize;
            let bw = 2.0 * zmax / nb as f64;
            let mut bins = vec![0.0f64; nb];
            let floor = ENVELOPE_FLOOR * r.max_abs();
            for (iy, &y) in f.ys.iter().enumerate() {
                for (ix, &x) in f.xs.iter().enumerate() {
                    let z = x - y - a * t;
                    if z.abs() >= zmax {
                        continue;
                    }
                    let bi = (((z + zmax) / bw) as usize).min(nb - 1);
                    let v = linalg::max_abs(&r.block(ix, iy));
                    bins[bi] = bins[bi].max(v);
                }
            }
            // Monotone envelope from the outside in.
            let mid = nb / 2;
            for i in (mid..nb - 1).rev() {
                bins[i] = bins[i].max(bins[i + 1]);
            }
            for i in 1..mid {
                bins[i] = bins[i].max(bins[i - 1]);
            }
            for (i, &v) in bins.iter().enumerate() {
                if v <= floor || v == 0.0 {
                    continue;
                }
                let zc = -zmax + (i as f64 + 0.5) * bw;
                rows_x.push(-zc * zc / t);
                rows_y.push(v.ln() + (1.0 + t).ln());
            }
        }
        if rows_x.len() < 3 {
            return Err(Error::NoConvergence("too few envelope samples to fit".into()));
        }
        let fit = crate::fit::regress(&rows_x, &rows_y);
        let inv_m = fit.slope;
        if !(inv_m > 0.0) {
            return Err(Error::Precondition(format!(
                "envelope-shape violation: fitted 1/M_res = {inv_m:.3e} is not positive"
            )));
        }
        m_res = 1.0 / inv_m;
        c_res = fit.intercept.exp();
        let ss: f64 = rows_x
            .iter()
            .zip(&rows_y)
            .map(|(x, y)| (y - fit.intercept - fit.slope * x).powi(2))
            .sum();
        scatter = (ss / rows_x.len() as f64).sqrt();
    }
    let slope = if times.len() >= 2 && !exact {
        crate::fit::loglog_slope(&times, &sups).slope
    } else {
        f64::NEG_INFINITY
    };
    Ok(LeadingTermSplit { a, b, c_res, m_res, scatter, slope, times, sup_residual: sups, relative_residual: rel, exact })
}

#[derive(Debug, Clone, Serialize)]
pub struct GyReadings {
    pub t: f64,
    /// `sup|G_y − E|` (leading term taken literally).
    pub literal: f64,
    /// `sup|G_y − ∂_y E|`.
    pub derivative: f64,
    pub sup_gy: f64,
}

/// Residuals of both readings of the `G_y` leading term; reported, not
/// asserted.
pub fn gy_readings(gy: &GreenField, branch: &SpectralBranch) -> GyReadings {
    let (mut lit, mut der) = (0.0f64, 0.0f64);
    for (iy, &y) in gy.ys.iter().enumerate() {
        for (ix, &x) in gy.xs.iter().enumerate() {
            let v = gy.block(ix, iy);
            lit = lit.max(linalg::max_abs(&(&v - leading_term(branch, x, gy.t, y))));
            der = der.max(linalg::max_abs(&(&v - leading_term_dy(branch, x, gy.t, y))));
        }
    }
    GyReadings { t: gy.t, literal: lit, derivative: der, sup_gy: gy.max_abs() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use crate::profile::make_constant_profile;
    use nalgebra::DMatrix;

    #[test]
    fn periodized_heat_kernel_with_one_node() {
        let p = make_constant_profile(1, 0.0, &DMatrix::zeros(1, 1), 16).unwrap();
        let f = green_bloch(&p, 1.0, BlochParams { k: 8, n_xi: 1, nc: 32, ny: 4 }).unwrap();
        for (iy, &y) in f.ys.iter().enumerate() {
            for (ix, &x) in f.xs.iter().enumerate() {
                let expect = oracle::periodized_heat(x - y, 1.0, 1.0);
                assert!((f.entry(ix, iy, 0, 0) - cr(expect)).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn whole_line_drifting_gaussian() {
        let p = make_constant_profile(1, -1.0, &DMatrix::zeros(1, 1), 16).unwrap();
        let f = green_bloch(&p, 1.0, BlochParams { k: 8, n_xi: 32, nc: 32, ny: 4 }).unwrap();
        for (iy, &y) in f.ys.iter().enumerate() {
            for (ix, &x) in f.xs.iter().enumerate() {
                let expect = oracle::heat_kernel(x - y - 1.0, 1.0, 1.0);
                assert!((f.entry(ix, iy, 0, 0) - cr(expect)).norm() < 1e-10);
            }
        }
        assert!(f.max_imag() < 1e-12);
    }
}
