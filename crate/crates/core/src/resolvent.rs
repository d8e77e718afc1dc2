//! Whole-line and periodic resolvent kernels of `L_ξ − λ` assembled from
//! Floquet solutions of the first-order system.
//!
//! For a base point `y`, let `ρ_i, v_i` be the multipliers and eigenvectors
//! of `Ψ(y) = ℱ^{y→y+1}` and `φ_i(x) = ℱ^{y→x}v_i`, so `φ_i(x+1) = ρ_i φ_i(x)`.
//! With `w_i` the dual rows restricted to the last `n` columns,
//!
//! * whole line: `𝒢(x,y) = Σ_{|ρ|<1} φ_i(x)w_i` for `x > y` and
//!   `−Σ_{|ρ|>1} φ_i(x)w_i` for `x ≤ y`;
//! * periodic cell: `G(x,y) = Σ_i φ_i(x)w_i/(1−ρ_i)` for `x > y` and
//!   `Σ_i φ_i(x+1)w_i/(1−ρ_i)` for `x ≤ y`.
//!
//! Growing modes are integrated forward from `y` and decaying ones backward
//! from `y+1`, so neither is swamped by the other when `|λ|` is large.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::floquet::{sort_multipliers, FloquetSystem};
use crate::linalg::{self, cr, C64, CMat, CVec};

/// Multipliers within this distance of the unit circle are rejected.
pub const UNIT_CIRCLE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    WholeLine,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ModeClass {
    Stable,
    Unstable,
    Neutral,
}

/// Floquet solutions attached to one base point `y`, sampled at `y + s` for
/// a fixed set of offsets `s ∈ [0,1]`.
#[derive(Debug, Clone)]
pub struct FloquetBasis {
    pub y: f64,
    pub n: usize,
    pub rho: Vec<C64>,
    class: Vec<ModeClass>,
    /// Eigenvectors `v_i` of Ψ(y) as columns.
    pub vectors: CMat,
    /// Rows of `V^{-1}`.
    pub duals: CMat,
    offsets: Vec<f64>,
    /// `phi[k][i]` is `φ_i(y + offsets[k])`.
    phi: Vec<Vec<CVec>>,
    pub monodromy: CMat,
}

fn merge_offsets(mut s: Vec<f64>) -> Vec<f64> {
    s.push(0.0);
    s.push(1.0);
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
    s
}

impl FloquetBasis {
    /// `allow_neutral` admits unit-circle multipliers (integrated forward);
    /// only the periodic kernel can use them.
    pub fn new(sys: &FloquetSystem, y: f64, offsets: &[f64], tol: f64, allow_neutral: bool) -> Result<Self> {
        let n = sys.profile.dim();
        let m = 2 * n;
        let offsets = merge_offsets(
            offsets.iter().map(|&s| if s > 1.0 - 1e-13 { 1.0 } else { s.max(0.0) }).collect(),
        );
        let fwd_x: Vec<f64> = offsets.iter().map(|s| y + s).collect();
        let fwd = sys.propagate(y, &fwd_x, tol)?;
        let bwd_x: Vec<f64> = offsets.iter().rev().map(|s| y + s).collect();
        let bwd = sys.propagate(y + 1.0, &bwd_x, tol)?;
        let psi = fwd.last().unwrap().matrix.clone();
        let psi_inv = bwd.last().unwrap().matrix.clone();

        let ef = sort_multipliers(linalg::eig(&psi)?);
        let eb = linalg::eig(&psi_inv)?;
        // With a large dynamic range the subdominant eigenpairs of Ψ (or Ψ⁻¹)
        // are round-off; a genuine pair of one must also be a pair of the
        // other with the reciprocal eigenvalue.
        let confirmed = |other: &CMat, v: CVec, mu: C64| -> bool {
            let r = other * &v - &v / mu;
            r.norm() <= 1e-4 * linalg::max_abs(other).max(1.0 / mu.norm()) * v.norm()
        };
        let lam_str = || format!("{}", sys.lambda);
        let mut rho = Vec::with_capacity(m);
        let mut class = Vec::with_capacity(m);
        let mut cols: Vec<CVec> = Vec::with_capacity(m);
        for (i, &r) in ef.values.iter().enumerate() {
            let md = r.norm();
            let v = ef.vectors.column(i).into_owned();
            if (md - 1.0).abs() <= UNIT_CIRCLE_TOL {
                if !confirmed(&psi_inv, v.clone(), r) {
                    continue;
                }
                if !allow_neutral {
                    return Err(Error::UnitCircle { modulus: md, lambda: lam_str() });
                }
                rho.push(r);
                class.push(ModeClass::Neutral);
                cols.push(v);
            } else if md > 1.0 && confirmed(&psi_inv, v.clone(), r) {
                rho.push(r);
                class.push(ModeClass::Unstable);
                cols.push(v);
            }
        }
        for (i, &nu) in eb.values.iter().enumerate() {
            let v = eb.vectors.column(i).into_owned();
            if nu.norm() > 1.0 + UNIT_CIRCLE_TOL && confirmed(&psi, v.clone(), nu) {
                rho.push(cr(1.0) / nu);
                class.push(ModeClass::Stable);
                cols.push(v);
            }
        }
        if rho.len() != m {
            return Err(Error::NoConvergence(format!(
                "inconsistent Floquet splitting: found {} of {m} multipliers (lambda={})",
                rho.len(),
                lam_str()
            )));
        }
        let vectors = CMat::from_columns(&cols);
        let duals = linalg::inverse(&vectors)?;
        let nk = offsets.len();
        let mut phi = vec![Vec::with_capacity(m); nk];
        for (k, row) in phi.iter_mut().enumerate() {
            for i in 0..m {
                let v = vectors.column(i).into_owned();
                let val = match class[i] {
                    ModeClass::Stable => &bwd[nk - 1 - k].matrix * v * rho[i],
                    _ => &fwd[k].matrix * v,
                };
                row.push(val);
            }
        }
        Ok(FloquetBasis { y, n, rho, class, vectors, duals, offsets, phi, monodromy: psi })
    }

    fn offset_index(&self, s: f64) -> Result<usize> {
        let k = self.offsets.partition_point(|&o| o < s - 1e-9);
        if k < self.offsets.len() && (self.offsets[k] - s).abs() <= 1e-9 {
            Ok(k)
        } else {
            Err(Error::Precondition(format!("offset {s} was not precomputed for base point {}", self.y)))
        }
    }

    /// `φ_i(x)` for any real `x` whose offset from `y` was precomputed.
    pub fn phi(&self, i: usize, x: f64) -> Result<CVec> {
        let d = x - self.y;
        let mut m = d.floor();
        let mut s = d - m;
        if s > 1.0 - 1e-12 {
            s = 0.0;
            m += 1.0;
        }
        let k = self.offset_index(s)?;
        Ok(&self.phi[k][i] * self.rho[i].powi(m as i32))
    }

    fn weight(&self, i: usize) -> CMat {
        let n = self.n;
        self.duals.view((i, n), (1, n)).into_owned()
    }

    /// Stacked `(𝒢, ∂_x𝒢)` at `x`, a `2n × n` block.
    pub fn whole(&self, x: f64) -> Result<CMat> {
        let mut out = CMat::zeros(2 * self.n, self.n);
        let upper = x > self.y;
        for i in 0..self.rho.len() {
            match (self.class[i], upper) {
                (ModeClass::Stable, true) => out += self.phi(i, x)? * self.weight(i),
                (ModeClass::Unstable, false) => out -= self.phi(i, x)? * self.weight(i),
                (ModeClass::Neutral, _) => {
                    return Err(Error::UnitCircle { modulus: self.rho[i].norm(), lambda: String::new() })
                }
                _ => {}
            }
        }
        Ok(out)
    }

    /// Stacked periodic kernel at `x` (both in the same period cell as `y`).
    pub fn periodic(&self, x: f64) -> Result<CMat> {
        let mut out = CMat::zeros(2 * self.n, self.n);
        let xe = if x > self.y { x } else { x + 1.0 };
        for i in 0..self.rho.len() {
            let den = cr(1.0) - self.rho[i];
            if den.norm() < 1e-8 {
                let sv = linalg::smallest_singular_value(&(CMat::identity(2 * self.n, 2 * self.n) - &self.monodromy));
                return Err(Error::SingularMonodromy(sv));
            }
            out += self.phi(i, xe)? * (self.weight(i) / den);
        }
        Ok(out)
    }

    /// Dichotomy projections at `y`.
    pub fn projections(&self) -> (CMat, CMat) {
        let m = 2 * self.n;
        let mut plus = CMat::zeros(m, m);
        for i in 0..m {
            if self.class[i] == ModeClass::Stable {
                plus += self.vectors.column(i) * self.duals.row(i);
            }
        }
        let minus = CMat::identity(m, m) - &plus;
        (plus, minus)
    }

    /// `min |log|ρ||`, the exponential decay rate of the whole-line kernel.
    pub fn decay_rate(&self) -> f64 {
        self.rho.iter().map(|r| r.norm().ln().abs()).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DichotomyProjections {
    pub base_y: f64,
    #[serde(skip)]
    pub pi_plus: CMat,
    #[serde(skip)]
    pub pi_minus: CMat,
    #[serde(skip)]
    pub multipliers: Vec<C64>,
    pub moduli: Vec<f64>,
    pub stable_count: usize,
}

pub fn dichotomy_projections(sys: &FloquetSystem, base_y: f64, tol: f64) -> Result<DichotomyProjections> {
    let basis = FloquetBasis::new(sys, base_y, &[], tol, false)?;
    let (pi_plus, pi_minus) = basis.projections();
    let mut multipliers = basis.rho.clone();
    multipliers.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap());
    let stable_count = multipliers.iter().filter(|r| r.norm() < 1.0).count();
    Ok(DichotomyProjections {
        base_y,
        pi_plus,
        pi_minus,
        moduli: multipliers.iter().map(|r| r.norm()).collect(),
        multipliers,
        stable_count,
    })
}

/// Sampled stacked kernel `(G, G′)`.
#[derive(Debug, Clone)]
pub struct KernelField {
    pub xi: f64,
    pub lambda: C64,
    pub kind: KernelKind,
    pub n: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `values[iy * xs.len() + ix]` is the `2n × n` stacked block.
    pub values: Vec<CMat>,
}

impl KernelField {
    pub fn stacked(&self, ix: usize, iy: usize) -> &CMat {
        &self.values[iy * self.xs.len() + ix]
    }

    pub fn g(&self, ix: usize, iy: usize) -> CMat {
        self.stacked(ix, iy).rows(0, self.n).into_owned()
    }

    pub fn dg(&self, ix: usize, iy: usize) -> CMat {
        self.stacked(ix, iy).rows(self.n, self.n).into_owned()
    }
}

fn offsets_for(xs: &[f64], y: f64) -> Vec<f64> {
    xs.iter().map(|&x| (x - y).rem_euclid(1.0)).collect()
}

fn assemble(sys: &FloquetSystem, xs: &[f64], ys: &[f64], tol: f64, kind: KernelKind) -> Result<KernelField> {
    let cols: Vec<Vec<CMat>> = ys
        .par_iter()
        .map(|&y| {
            let basis = FloquetBasis::new(sys, y, &offsets_for(xs, y), tol, kind == KernelKind::Periodic)?;
            xs.iter()
                .map(|&x| match kind {
                    KernelKind::WholeLine => basis.whole(x),
                    KernelKind::Periodic => basis.periodic(x),
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KernelField {
        xi: sys.xi,
        lambda: sys.lambda,
        kind,
        n: sys.profile.dim(),
        xs: xs.to_vec(),
        ys: ys.to_vec(),
        values: cols.into_iter().flatten().collect(),
    })
}

/// Whole-line kernel `𝒢_{ξ,λ}` on `xs × ys`; `xs` may extend beyond `[0,1)`.
pub fn whole_line_kernel(sys: &FloquetSystem, xs: &[f64], ys: &[f64], tol: f64) -> Result<KernelField> {
    assemble(sys, xs, ys, tol, KernelKind::WholeLine)
}

/// Periodic-cell kernel `G_{ξ,λ}` on `xs × ys ⊂ [0,1)²`.
pub fn periodic_kernel(sys: &FloquetSystem, xs: &[f64], ys: &[f64], tol: f64) -> Result<KernelField> {
    assemble(sys, xs, ys, tol, KernelKind::Periodic)
}

/// Uniform grid `j/N`, `j = 0..N`.
pub fn unit_grid(n: usize) -> Vec<f64> {
    (0..n).map(|j| j as f64 / n as f64).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ImagesReport {
    pub j_max: usize,
    /// Max deviation between the periodic kernel and the truncated image sum
    /// for `J = 0..=j_max`.
    pub deviations: Vec<f64>,
    /// Decay rate `c = min |log|ρ||` of the whole-line kernel.
    pub decay_rate: f64,
    /// `2K e^{−cJ}/(1−e^{−c})` at `J = j_max`.
    pub tail_bound: f64,
    pub prefactor: f64,
}

/// Compare `G_{ξ,λ}(x,y)` with `Σ_{|j|≤J} 𝒢_{ξ,λ}(x, y+j)` for every J up
/// to `j_max`. Uses `𝒢(x, y+j) = 𝒢(x−j, y)`.
pub fn method_of_images_check(sys: &FloquetSystem, j_max: usize, xs: &[f64], ys: &[f64], tol: f64) -> Result<ImagesReport> {
    let per_y: Vec<(Vec<f64>, f64, f64)> = ys
        .par_iter()
        .map(|&y| {
            let basis = FloquetBasis::new(sys, y, &offsets_for(xs, y), tol, false)?;
            let c = basis.decay_rate();
            if !(c > 0.0) {
                return Err(Error::Precondition("whole-line kernel does not decay".into()));
            }
            let mut dev = vec![0.0f64; j_max + 1];
            let mut kmax = 0.0f64;
            for &x in xs {
                let target = basis.periodic(x)?;
                let mut acc = basis.whole(x)?;
                kmax = kmax.max(linalg::max_abs(&acc));
                dev[0] = dev[0].max(linalg::max_abs(&(&target - &acc)));
                for j in 1..=j_max {
                    let jf = j as f64;
                    let left = basis.whole(x - jf)?;
                    let right = basis.whole(x + jf)?;
                    if j == 1 {
                        kmax = kmax.max(linalg::max_abs(&left)).max(linalg::max_abs(&right));
                    }
                    acc += left + right;
                    dev[j] = dev[j].max(linalg::max_abs(&(&target - &acc)));
                }
            }
            Ok((dev, c, kmax))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut deviations = vec![0.0f64; j_max + 1];
    let mut c = f64::INFINITY;
    let mut kmax = 0.0f64;
    for (d, cy, ky) in per_y {
        for j in 0..=j_max {
            deviations[j] = deviations[j].max(d[j]);
        }
        c = c.min(cy);
        kmax = kmax.max(ky);
    }
    let prefactor = kmax * c.exp();
    let tail_bound = 2.0 * prefactor * (-c * j_max as f64).exp() / (1.0 - (-c).exp());
    Ok(ImagesReport { j_max, deviations, decay_rate: c, tail_bound, prefactor })
}

#[derive(Debug, Clone, Serialize)]
pub struct HighFrequencyReport {
    /// Fitted prefactor `C` in `|G| ≈ C|λ|^{-1/2} e^{−β^{-1/2}|λ^{1/2}| d}`.
    pub prefactor: f64,
    /// Fitted rate `β^{-1/2}`.
    pub rate: f64,
    /// Max absolute residual of the log-linear fit.
    pub scatter: f64,
    /// `min Re √(λ/|λ|)` over the sample.
    pub min_re_sqrt_dir: f64,
    /// `sup_{x,y} |G_{ξ,λ}(x,y)|·|λ|^{1/2}` per λ.
    pub scaled_sup: Vec<f64>,
    pub lambdas: Vec<(f64, f64)>,
}

/// Periodic distance `min_j |z − j|`.
pub fn circle_distance(z: f64) -> f64 {
    let r = z.rem_euclid(1.0);
    r.min(1.0 - r)
}

/// Fit `log|G(x,y)| + ½log|λ| ≈ log C − rate·|λ|^{1/2}·d(x,y)` over the
/// given λ values and `(x, y)` pairs, using the periodic kernel.
pub fn high_frequency_modulus_check(
    profile: &crate::profile::WaveProfile,
    xi: f64,
    lambdas: &[C64],
    pairs: &[(f64, f64)],
    tol: f64,
) -> Result<HighFrequencyReport> {
    let mut rows: Vec<(f64, f64)> = Vec::new();
    let mut scaled_sup = Vec::with_capacity(lambdas.len());
    for &lam in lambdas {
        let sys = FloquetSystem::new(profile, xi, lam);
        let sq = lam.norm().sqrt();
        let mut by_y: std::collections::BTreeMap<u64, (f64, Vec<f64>)> = std::collections::BTreeMap::new();
        for &(x, y) in pairs {
            by_y.entry(y.to_bits()).or_insert((y, vec![])).1.push(x);
        }
        let mut sup = 0.0f64;
        for (_, (y, xs)) in by_y {
            let basis = FloquetBasis::new(&sys, y, &offsets_for(&xs, y), tol, true)?;
            for &x in &xs {
                let g = basis.periodic(x)?;
                let v = linalg::max_abs(&g.rows(0, profile.dim()).into_owned());
                if !v.is_finite() || v == 0.0 {
                    return Err(Error::NoConvergence(format!("kernel non-finite or zero at lambda={lam}")));
                }
                sup = sup.max(v * sq);
                rows.push((sq * circle_distance(x - y), v.ln() + 0.5 * lam.norm().ln()));
            }
        }
        scaled_sup.push(sup);
    }
    let (intercept, slope) = crate::fit::linear_fit(&rows.iter().map(|r| r.0).collect::<Vec<_>>(), &rows.iter().map(|r| r.1).collect::<Vec<_>>());
    let scatter = rows.iter().map(|&(d, v)| (v - intercept - slope * d).abs()).fold(0.0, f64::max);
    let min_re_sqrt_dir = lambdas.iter().map(|l| (l / l.norm()).sqrt().re).fold(f64::INFINITY, f64::min);
    Ok(HighFrequencyReport {
        prefactor: intercept.exp(),
        rate: -slope,
        scatter,
        min_re_sqrt_dir,
        scaled_sup,
        lambdas: lambdas.iter().map(|l| (l.re, l.im)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use crate::profile::make_constant_profile;
    use nalgebra::DMatrix;

    #[test]
    fn kernels_match_constant_closed_forms() {
        let (a, xi, lam) = (1.0, 0.3, C64::new(1.0, 0.0));
        let p = make_constant_profile(1, -a, &DMatrix::zeros(1, 1), 16).unwrap();
        let sys = FloquetSystem::new(&p, xi, lam);
        let grid = unit_grid(8);
        let w = whole_line_kernel(&sys, &grid, &grid, 1e-12).unwrap();
        let per = periodic_kernel(&sys, &grid, &grid, 1e-12).unwrap();
        for (ix, &x) in grid.iter().enumerate() {
            for (iy, &y) in grid.iter().enumerate() {
                let (g, dg) = oracle::constant_whole(a, xi, lam, x, y);
                assert!((w.g(ix, iy)[(0, 0)] - g).norm() < 1e-9 * g.norm());
                assert!((w.dg(ix, iy)[(0, 0)] - dg).norm() < 1e-9 * dg.norm().max(1e-3));
                let (g, _) = oracle::constant_periodic(a, xi, lam, x, y);
                assert!((per.g(ix, iy)[(0, 0)] - g).norm() < 1e-9 * g.norm());
            }
        }
    }

    #[test]
    fn projections_match_closed_form() {
        let p = make_constant_profile(1, 0.0, &DMatrix::zeros(1, 1), 16).unwrap();
        let sys = FloquetSystem::new(&p, 0.0, cr(1.0));
        let d = dichotomy_projections(&sys, 0.0, 1e-12).unwrap();
        let (pp, pm) = oracle::constant_projections(0.0, 0.0, cr(1.0));
        assert!(linalg::max_abs(&(&d.pi_plus - pp)) < 1e-10);
        assert!(linalg::max_abs(&(&d.pi_minus - pm)) < 1e-10);
        assert_eq!(d.stable_count, 1);
    }

    #[test]
    fn unit_circle_rejected() {
        let p = make_constant_profile(1, 0.0, &DMatrix::zeros(1, 1), 16).unwrap();
        let root = C64::new(1e-7, 2.0);
        let sys = FloquetSystem::new(&p, 0.0, root * root);
        assert!(matches!(dichotomy_projections(&sys, 0.0, 1e-12), Err(Error::UnitCircle { .. })));
    }
}
