//! Periodic coefficient data for `L = ∂² + a∂ + df(ū(x))`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::spectral::{self, MatrixInterp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Analytic,
    Manufactured,
    ExternalFile,
}

/// Coefficients of the linearized operator sampled on the uniform grid
/// `x_j = j/N_x`, `j = 0..N_x`. Period is 1; values on `[0,1)` are stored and
/// everything else wraps.
#[derive(Debug, Clone)]
pub struct WaveProfile {
    n: usize,
    a: f64,
    coeff: Vec<DMatrix<f64>>,
    profile: Option<Vec<DVector<f64>>>,
    derivative: Option<Vec<DVector<f64>>>,
    source: Source,
    interp: MatrixInterp,
}

fn check_grid(nx: usize) -> Result<()> {
    if nx % 2 != 0 {
        return Err(Error::Grid(format!("grid must be even (got {nx})")));
    }
    if nx < 16 {
        return Err(Error::Grid(format!("grid must have at least 16 points (got {nx})")));
    }
    Ok(())
}

impl WaveProfile {
    /// General constructor from per-point Jacobian samples.
    pub fn from_samples(a: f64, coeff: Vec<DMatrix<f64>>, source: Source) -> Result<Self> {
        check_grid(coeff.len())?;
        let n = coeff[0].nrows();
        if n == 0 {
            return Err(Error::Dimension("dimension must be positive".into()));
        }
        for (j, m) in coeff.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::Dimension(format!(
                    "grid point {j}: expected {n}x{n}, got {}x{}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Precondition(format!("non-finite coefficient at grid point {j}")));
            }
        }
        if !a.is_finite() {
            return Err(Error::param("a", "speed must be finite"));
        }
        let interp = MatrixInterp::new(&coeff);
        Ok(WaveProfile { n, a, coeff, profile: None, derivative: None, source, interp })
    }

    /// Attach ū and ū′ samples. ū′ must agree with the spectral derivative of
    /// ū to relative tolerance 1e-6.
    pub fn with_profile(mut self, ubar: Vec<DVector<f64>>, dubar: Vec<DVector<f64>>) -> Result<Self> {
        let nx = self.grid_size();
        if ubar.len() != nx || dubar.len() != nx {
            return Err(Error::Dimension("profile samples must match the coefficient grid".into()));
        }
        if ubar.iter().chain(dubar.iter()).any(|v| v.len() != self.n) {
            return Err(Error::Dimension("profile samples must have length n".into()));
        }
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for comp in 0..self.n {
            let u: Vec<f64> = ubar.iter().map(|v| v[comp]).collect();
            let du = spectral::derivative(&u, 1);
            for j in 0..nx {
                worst = worst.max((du[j] - dubar[j][comp]).abs());
                scale = scale.max(dubar[j][comp].abs());
            }
        }
        if worst > 1e-6 * scale.max(1e-300) {
            return Err(Error::Precondition(format!(
                "derivative samples inconsistent with spectral derivative of profile (max deviation {worst:.3e})"
            )));
        }
        self.profile = Some(ubar);
        self.derivative = Some(dubar);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn speed(&self) -> f64 {
        self.a
    }

    pub fn grid_size(&self) -> usize {
        self.coeff.len()
    }

    pub fn grid(&self) -> Vec<f64> {
        let nx = self.grid_size();
        (0..nx).map(|j| j as f64 / nx as f64).collect()
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn coeff_samples(&self) -> &[DMatrix<f64>] {
        &self.coeff
    }

    pub fn profile_samples(&self) -> Option<&[DVector<f64>]> {
        self.profile.as_deref()
    }

    pub fn derivative_samples(&self) -> Option<&[DVector<f64>]> {
        self.derivative.as_deref()
    }

    /// Coefficient sample at grid index `j` (wrapped).
    pub fn coeff_at_index(&self, j: i64) -> &DMatrix<f64> {
        let nx = self.grid_size() as i64;
        &self.coeff[j.rem_euclid(nx) as usize]
    }

    /// Band-limited interpolation of `df(ū(x))` at any real `x`.
    pub fn coeff_at(&self, x: f64) -> crate::linalg::CMat {
        self.interp.eval(x)
    }

    /// Fourier coefficient `ĉ_k` of `df(ū)`.
    pub fn coeff_fourier(&self, k: i64) -> crate::linalg::CMat {
        self.interp.coeff(k)
    }

    pub fn fourier_tail_beyond(&self, kmax: usize) -> f64 {
        self.interp.tail_beyond(kmax)
    }

    pub fn is_constant(&self) -> bool {
        self.interp.is_constant()
    }

    pub fn interp(&self) -> &MatrixInterp {
        &self.interp
    }

    /// Surrogate for q(·,0): ū′ when known (the manufactured fixture stores
    /// its zero mode p there), otherwise `None`.
    pub fn zero_mode(&self) -> Option<&[DVector<f64>]> {
        self.derivative.as_deref()
    }

    /// Canonical text serialization.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let nx = self.grid_size();
        writeln!(s, "n={} a={} Nx={}", self.n, fmt_f64(self.a), nx).unwrap();
        for (j, m) in self.coeff.iter().enumerate() {
            write!(s, "{j}").unwrap();
            for r in 0..self.n {
                for c in 0..self.n {
                    write!(s, " {}", fmt_f64(m[(r, c)])).unwrap();
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())
            .map_err(|e| Error::Io { path: path.display().to_string(), source: e })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hl, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
        let mut n = None;
        let mut a = None;
        let mut nx = None;
        for tok in header.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: hl, msg: format!("bad header token `{tok}`") })?;
            let bad = |what: &str| Error::Parse { line: hl, msg: format!("bad {what} `{v}`") };
            match k {
                "n" => n = Some(v.parse::<usize>().map_err(|_| bad("n"))?),
                "a" => a = Some(v.parse::<f64>().map_err(|_| bad("a"))?),
                "Nx" => nx = Some(v.parse::<usize>().map_err(|_| bad("Nx"))?),
                _ => return Err(Error::Parse { line: hl, msg: format!("unknown header key `{k}`") }),
            }
        }
        let missing = |k: &str| Error::Parse { line: hl, msg: format!("header missing `{k}`") };
        let n = n.ok_or_else(|| missing("n"))?;
        let a = a.ok_or_else(|| missing("a"))?;
        let nx = nx.ok_or_else(|| missing("Nx"))?;
        if n == 0 {
            return Err(Error::Dimension("n must be positive".into()));
        }
        let mut coeff = Vec::with_capacity(nx);
        let mut wrap: Option<DMatrix<f64>> = None;
        for (ln, line) in lines {
            let mut toks = line.split_whitespace();
            let idx: usize = toks
                .next()
                .unwrap()
                .parse()
                .map_err(|_| Error::Parse { line: ln, msg: "grid index must be a nonnegative integer".into() })?;
            let vals: Vec<f64> = toks
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Parse { line: ln, msg: "non-numeric matrix entry".into() })?;
            if vals.len() != n * n {
                return Err(Error::Dimension(format!(
                    "line {ln}: expected {} entries for n={n}, got {}",
                    n * n,
                    vals.len()
                )));
            }
            let m = DMatrix::from_row_slice(n, n, &vals);
            if idx == coeff.len() && idx < nx {
                coeff.push(m);
            } else if idx == nx && coeff.len() == nx && wrap.is_none() {
                wrap = Some(m);
            } else {
                return Err(Error::Grid(format!(
                    "line {ln}: grid index {idx} out of sequence (expected {}); grid is not uniform",
                    coeff.len()
                )));
            }
        }
        if coeff.len() != nx {
            return Err(Error::Grid(format!("header declares Nx={nx} but {} blocks were found", coeff.len())));
        }
        check_grid(nx)?;
        if let Some(w) = wrap {
            if (&w - &coeff[0]).abs().max() > 1e-12 * (1.0 + coeff[0].abs().max()) {
                return Err(Error::Grid("coefficients are not periodic: value at x=1 differs from x=0".into()));
            }
        }
        WaveProfile::from_samples(a, coeff, Source::ExternalFile)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
        Self::parse(&text)
    }
}

/// Shortest representation that parses back to the same bits, always in
/// exponent form so that columns line up.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// `df(ū) ≡ c0` on every grid point.
pub fn make_constant_profile(n: usize, a: f64, c0: &DMatrix<f64>, grid_size: usize) -> Result<WaveProfile> {
    check_grid(grid_size)?;
    if c0.nrows() != n || c0.ncols() != n {
        return Err(Error::Dimension(format!("c0 must be {n}x{n}")));
    }
    WaveProfile::from_samples(a, vec![c0.clone(); grid_size], Source::Analytic)
}

/// Scalar profile whose coefficient `c = −(p″ + a p′)/p` makes `p` an exact
/// zero mode of `∂² + a∂ + c` on the grid. `p` doubles as the zero-mode
/// surrogate stored in the derivative slot.
pub fn make_manufactured_profile(p: &[f64], a: f64, grid_size: usize) -> Result<WaveProfile> {
    check_grid(grid_size)?;
    if p.len() != grid_size {
        return Err(Error::Dimension(format!("p has {} samples, grid has {grid_size}", p.len())));
    }
    let pmin = p.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    if pmin < 1e-8 {
        return Err(Error::Precondition(format!("min |p| = {pmin:.3e} < 1e-8")));
    }
    if p.iter().any(|&v| v <= 0.0) {
        return Err(Error::Precondition("p must be strictly positive".into()));
    }
    let dp = spectral::derivative(p, 1);
    let ddp = spectral::derivative(p, 2);
    let coeff: Vec<DMatrix<f64>> = (0..grid_size)
        .map(|j| DMatrix::from_element(1, 1, -(ddp[j] + a * dp[j]) / p[j]))
        .collect();
    let mut prof = WaveProfile::from_samples(a, coeff, Source::Manufactured)?;
    prof.derivative = Some(p.iter().map(|&v| DVector::from_element(1, v)).collect());
    Ok(prof)
}

/// The standard manufactured fixture `p = 1 + amp·sin 2πx`.
pub fn manufactured_sine(amp: f64, a: f64, grid_size: usize) -> Result<WaveProfile> {
    let p: Vec<f64> = (0..grid_size)
        .map(|j| 1.0 + amp * (2.0 * PI * j as f64 / grid_size as f64).sin())
        .collect();
    make_manufactured_profile(&p, a, grid_size)
}

/// Max-norm of `p″ + a p′ + c p` on the grid.
pub fn manufactured_residual(profile: &WaveProfile, p: &[f64]) -> f64 {
    let dp = spectral::derivative(p, 1);
    let ddp = spectral::derivative(p, 2);
    let a = profile.speed();
    (0..p.len())
        .map(|j| (ddp[j] + a * dp[j] + profile.coeff_samples()[j][(0, 0)] * p[j]).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_profiles() {
        let p = make_constant_profile(1, 1.0, &DMatrix::zeros(1, 1), 64).unwrap();
        assert_eq!(p.grid_size(), 64);
        assert!(p.is_constant());
        assert_eq!(p.speed(), 1.0);
        let d = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let p = make_constant_profile(2, 1.0, &d, 32).unwrap();
        assert!(p.coeff_samples().iter().all(|m| *m == d));
        assert_eq!(p.source(), Source::Analytic);
        assert!(make_constant_profile(1, 0.0, &DMatrix::zeros(1, 1), 15).is_err());
        assert!(make_constant_profile(1, 0.0, &DMatrix::zeros(1, 1), 14).is_err());
    }

    #[test]
    fn manufactured_identity_holds() {
        for (a, nx) in [(1.0, 64), (0.0, 32)] {
            let prof = manufactured_sine(0.3, a, nx).unwrap();
            let p: Vec<f64> = prof.zero_mode().unwrap().iter().map(|v| v[0]).collect();
            assert!(manufactured_residual(&prof, &p) < 1e-10);
        }
        let flat = manufactured_sine(0.0, 1.0, 64).unwrap();
        assert!(flat.coeff_samples().iter().all(|m| m[(0, 0)].abs() < 1e-12));
        let p = vec![0.0; 16];
        assert!(make_manufactured_profile(&p, 1.0, 16).is_err());
    }

    #[test]
    fn round_trip_text() {
        let prof = manufactured_sine(0.3, 1.0, 64).unwrap();
        let text = prof.to_text();
        let back = WaveProfile::parse(&text).unwrap();
        assert_eq!(back.to_text(), text);
        assert_eq!(back.coeff_samples(), prof.coeff_samples());
    }

    #[test]
    fn parse_errors() {
        let mut text = String::from("n=1 a=0 Nx=63\n");
        for j in 0..63 {
            text.push_str(&format!("{j} 0.0\n"));
        }
        let e = WaveProfile::parse(&text).unwrap_err().to_string();
        assert!(e.contains("grid must be even"), "{e}");
        let mut text = String::from("n=2 a=0 Nx=16\n");
        for j in 0..16 {
            text.push_str(&format!("{j} 0.0 1.0 2.0\n"));
        }
        assert!(matches!(WaveProfile::parse(&text), Err(Error::Dimension(_))));
        let mut text = String::from("n=1 a=0 Nx=16\n");
        for j in 0..16 {
            text.push_str(&format!("{} 0.0\n", if j == 5 { 7 } else { j }));
        }
        assert!(matches!(WaveProfile::parse(&text), Err(Error::Grid(_))));
    }

    #[test]
    fn profile_consistency_check() {
        let nx = 32;
        let xs: Vec<f64> = (0..nx).map(|j| j as f64 / nx as f64).collect();
        let u: Vec<DVector<f64>> = xs.iter().map(|x| DVector::from_element(1, (2.0 * PI * x).cos())).collect();
        let du: Vec<DVector<f64>> =
            xs.iter().map(|x| DVector::from_element(1, -2.0 * PI * (2.0 * PI * x).sin())).collect();
        let prof = make_constant_profile(1, 0.0, &DMatrix::zeros(1, 1), nx).unwrap();
        assert!(prof.clone().with_profile(u.clone(), du.clone()).is_ok());
        let mut bad = du;
        bad[3][0] += 1e-3;
        assert!(prof.with_profile(u, bad).is_err());
    }
}
