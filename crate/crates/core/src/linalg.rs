//! Dense complex linear algebra used throughout the crate.
//!
//! Everything is built on `nalgebra::DMatrix<Complex<f64>>`. The pieces nalgebra
//! does not provide directly (eigenvectors of a general complex matrix, the
//! matrix exponential) live here.

use nalgebra::{DMatrix, DVector};
use nalgebra::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Principal square root with the cut on the negative real axis.
#[inline]
pub fn csqrt(z: C64) -> C64 {
    z.sqrt()
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Largest entry modulus.
pub fn max_abs(a: &CMat) -> f64 {
    a.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
}

pub fn norm1(a: &CMat) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn frobenius(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn to_complex(a: &DMatrix<f64>) -> CMat {
    a.map(cr)
}

/// Eigen-decomposition `A = V diag(values) V^{-1}`.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<C64>,
    /// Right eigenvectors as unit-norm columns, in the order of `values`.
    pub vectors: CMat,
}

impl Eigen {
    /// Rows of `V^{-1}`: the dual (left) eigenvectors normalized so that
    /// `left.row(i) * vectors.column(j) = δ_ij`.
    pub fn left(&self) -> Result<CMat> {
        inverse(&self.vectors)
    }

    /// 2-norm condition number of the eigenvector matrix.
    pub fn condition(&self) -> f64 {
        condition_number(&self.vectors)
    }

    /// Reorder by a key; `key` receives eigenvalues.
    pub fn sorted_by<F>(mut self, mut cmp: F) -> Self
    where
        F: FnMut(&C64, &C64) -> std::cmp::Ordering,
    {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&i, &j| cmp(&self.values[i], &self.values[j]));
        let values = idx.iter().map(|&i| self.values[i]).collect();
        let n = self.vectors.nrows();
        let mut vectors = CMat::zeros(n, idx.len());
        for (new, &old) in idx.iter().enumerate() {
            vectors.set_column(new, &self.vectors.column(old));
        }
        self.values = values;
        self.vectors = vectors;
        self
    }
}

/// General complex eigen-decomposition through the complex Schur form
/// followed by triangular back-substitution for the eigenvectors.
pub fn eig(a: &CMat) -> Result<Eigen> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Linalg("eig requires a square matrix".into()));
    }
    if n == 0 {
        return Ok(Eigen { values: vec![], vectors: CMat::zeros(0, 0) });
    }
    if !a.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::Linalg("eig: non-finite matrix entries".into()));
    }
    let scale = max_abs(a).max(f64::MIN_POSITIVE);
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), 1e-15, 10_000 + 100 * n).ok_or_else(|| {
        Error::Linalg(format!(
            "Schur iteration failed to converge (n={n}, cond~{:.3e})",
            condition_number(a)
        ))
    })?;
    let (q, mut t) = schur.unpack();
    // Complex Schur forms are triangular; flush round-off below the diagonal.
    for j in 0..n {
        for i in (j + 1)..n {
            if t[(i, j)].norm() > 1e-10 * scale {
                return Err(Error::Linalg("Schur form not triangular".into()));
            }
            t[(i, j)] = C64::new(0.0, 0.0);
        }
    }
    let values: Vec<C64> = (0..n).map(|k| t[(k, k)]).collect();
    let smin = (f64::EPSILON * scale).max(f64::MIN_POSITIVE * 1e10);
    let mut w = CMat::zeros(n, n);
    for k in 0..n {
        let lam = t[(k, k)];
        w[(k, k)] = cr(1.0);
        for i in (0..k).rev() {
            let mut acc = C64::new(0.0, 0.0);
            for j in (i + 1)..=k {
                acc += t[(i, j)] * w[(j, k)];
            }
            let mut d = t[(i, i)] - lam;
            if d.norm() < smin {
                d = cr(smin);
            }
            w[(i, k)] = -acc / d;
        }
    }
    let mut vectors = q * w;
    for k in 0..n {
        let nrm = vectors.column(k).norm();
        if nrm > 0.0 {
            vectors.column_mut(k).scale_mut(1.0 / nrm);
        }
    }
    Ok(Eigen { values, vectors })
}

/// Eigenvalues only.
pub fn eigenvalues(a: &CMat) -> Result<Vec<C64>> {
    Ok(eig(a)?.values)
}

pub fn inverse(a: &CMat) -> Result<CMat> {
    a.clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Linalg("singular matrix".into()))
}

pub fn solve(a: &CMat, b: &CMat) -> Result<CMat> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Linalg("singular linear system".into()))
}

pub fn singular_values(a: &CMat) -> Vec<f64> {
    let sv = a.clone().svd(false, false).singular_values;
    sv.iter().copied().collect()
}

pub fn smallest_singular_value(a: &CMat) -> f64 {
    singular_values(a).into_iter().fold(f64::INFINITY, f64::min)
}

pub fn condition_number(a: &CMat) -> f64 {
    let sv = singular_values(a);
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn det(a: &CMat) -> C64 {
    a.clone().lu().determinant()
}

// Padé(13) coefficients and the backward-error threshold for scaling and squaring.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    let nrm = norm1(a);
    let s = if nrm > THETA13 {
        (nrm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = a * cr(0.5f64.powi(s));
    let b = &PADE13;
    let id = identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * cr(b[13]) + &a4 * cr(b[11]) + &a2 * cr(b[9]))
        + &a6 * cr(b[7])
        + &a4 * cr(b[5])
        + &a2 * cr(b[3])
        + &id * cr(b[1]);
    let u = &a * u_inner;
    let v = &a6 * (&a6 * cr(b[12]) + &a4 * cr(b[10]) + &a2 * cr(b[8]))
        + &a6 * cr(b[6])
        + &a4 * cr(b[4])
        + &a2 * cr(b[2])
        + &id * cr(b[0]);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).expect("Padé denominator is nonsingular for scaled input");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// `exp(A t)` through an eigen-decomposition, falling back to Padé scaling
/// and squaring when the eigenvector matrix is too ill-conditioned.
pub struct ExpPropagator {
    kind: PropKind,
}

enum PropKind {
    Diag { values: Vec<C64>, vectors: CMat, inverse: CMat },
    Dense { a: CMat },
}

impl ExpPropagator {
    /// Eigenvector condition numbers above this use scaling and squaring.
    pub const MAX_CONDITION: f64 = 1e8;

    pub fn new(a: &CMat) -> Self {
        if let Ok(e) = eig(a) {
            if e.condition() < Self::MAX_CONDITION {
                if let Ok(inv) = inverse(&e.vectors) {
                    return ExpPropagator {
                        kind: PropKind::Diag { values: e.values, vectors: e.vectors, inverse: inv },
                    };
                }
            }
        }
        ExpPropagator { kind: PropKind::Dense { a: a.clone() } }
    }

    pub fn is_diagonalized(&self) -> bool {
        matches!(self.kind, PropKind::Diag { .. })
    }

    pub fn exp(&self, t: f64) -> CMat {
        match &self.kind {
            PropKind::Diag { values, vectors, inverse } => {
                let mut scaled = vectors.clone();
                for (j, lam) in values.iter().enumerate() {
                    let f = (lam * t).exp();
                    for i in 0..scaled.nrows() {
                        scaled[(i, j)] *= f;
                    }
                }
                scaled * inverse
            }
            PropKind::Dense { a } => expm(&(a * cr(t))),
        }
    }

    /// `exp(A t) b` for a block of right-hand sides.
    pub fn apply(&self, t: f64, b: &CMat) -> CMat {
        match &self.kind {
            PropKind::Diag { values, vectors, inverse } => {
                let mut y = inverse * b;
                for (i, lam) in values.iter().enumerate() {
                    let f = (lam * t).exp();
                    for j in 0..y.ncols() {
                        y[(i, j)] *= f;
                    }
                }
                vectors * y
            }
            PropKind::Dense { a } => expm(&(a * cr(t))) * b,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_matrix(n: usize, seed: u64) -> CMat {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        CMat::from_fn(n, n, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn eig_reconstructs_random_matrices() {
        for (n, seed) in [(2, 1), (5, 2), (17, 3), (40, 4)] {
            let a = rand_matrix(n, seed);
            let e = eig(&a).unwrap();
            let d = CMat::from_diagonal(&CVec::from_vec(e.values.clone()));
            let recon = &e.vectors * d * inverse(&e.vectors).unwrap();
            assert!(max_abs(&(recon - &a)) < 1e-10, "n={n}");
        }
    }

    #[test]
    fn eig_of_triangular_and_diagonal() {
        let a = CMat::from_row_slice(2, 2, &[cr(1.0), cr(2.0), cr(0.0), cr(3.0)]);
        let mut v = eigenvalues(&a).unwrap();
        v.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap());
        assert!((v[0] - cr(1.0)).norm() < 1e-14 && (v[1] - cr(3.0)).norm() < 1e-14);
    }

    #[test]
    fn expm_matches_closed_forms() {
        // exp([[0,1],[1,0]]) = [[cosh 1, sinh 1],[sinh 1, cosh 1]]
        let a = CMat::from_row_slice(2, 2, &[cr(0.0), cr(1.0), cr(1.0), cr(0.0)]);
        let e = expm(&a);
        let (ch, sh) = (1f64.cosh(), 1f64.sinh());
        assert!((e[(0, 0)] - cr(ch)).norm() < 1e-14);
        assert!((e[(0, 1)] - cr(sh)).norm() < 1e-14);
        // Rotation generator with a large norm exercises squaring.
        let w = 37.3;
        let r = CMat::from_row_slice(2, 2, &[cr(0.0), cr(-w), cr(w), cr(0.0)]);
        let e = expm(&r);
        assert!((e[(0, 0)] - cr(w.cos())).norm() < 1e-11);
        assert!((e[(1, 0)] - cr(w.sin())).norm() < 1e-11);
        // Nilpotent Jordan block: exp(N) = I + N.
        let nil = CMat::from_row_slice(2, 2, &[cr(0.0), cr(1.0), cr(0.0), cr(0.0)]);
        let e = expm(&nil);
        assert!((e[(0, 1)] - cr(1.0)).norm() < 1e-15 && (e[(0, 0)] - cr(1.0)).norm() < 1e-15);
    }

    #[test]
    fn propagator_routes_agree() {
        let a = rand_matrix(12, 9) * cr(0.7);
        let p = ExpPropagator::new(&a);
        assert!(p.is_diagonalized());
        let t = 1.3;
        let dense = expm(&(&a * cr(t)));
        assert!(max_abs(&(p.exp(t) - &dense)) < 1e-10 * max_abs(&dense));
    }
}
