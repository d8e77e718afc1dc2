//! Experiment configuration: one TOML file (key = value with sections)
//! describing the fixture, numerical parameters and the tasks to run.
//!
//! ```toml
//! name = "oracle-suite"
//! output = "out/oracle"
//! seed = 7
//!
//! [fixture]
//! kind = "advection"
//! a = 1.0
//!
//! [numerics]
//! K = 16
//!
//! [evans]
//! [resolvent]
//! [green]
//! times = [0.5, 1.0, 2.0]
//! ```
//!
//! A task runs when its section is present; omitted keys take the defaults
//! below. Every value is range-checked at parse time and a violation names
//! the offending key.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bloch::MIN_K;
use crate::error::{Error, Result};
use crate::profile::{self, WaveProfile};
use crate::sim::heat::DataClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixtureKind {
    /// `∂²` (zero drift, zero potential).
    Heat,
    /// `u_t + a u_x = u_xx`.
    Advection,
    /// Scalar constant coefficient `∂² + speed·∂ + c0`.
    Constant,
    /// `p = 1 + amp·sin 2πx` with speed `a`.
    Manufactured,
    /// Profile text file.
    File,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureConfig {
    pub kind: FixtureKind,
    /// Drift `a` for `advection`, speed for `constant` and `manufactured`.
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub c0: f64,
    #[serde(default = "d_amp")]
    pub amp: f64,
    #[serde(default = "d_grid")]
    pub grid: usize,
    #[serde(default)]
    pub path: Option<PathBuf>,
}

fn d_amp() -> f64 {
    0.3
}
fn d_grid() -> usize {
    64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    #[serde(rename = "K", default = "d_k")]
    pub k: usize,
    #[serde(default = "d_tol")]
    pub tol: f64,
}

fn d_k() -> usize {
    16
}
fn d_tol() -> f64 {
    1e-10
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics { k: d_k(), tol: d_tol() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvansTask {
    /// Number of ξ values in `[-π/2, π/2]` for the dispersion roots.
    #[serde(default = "d_16")]
    pub xi_count: usize,
    /// Random circular contours for the winding-number check.
    #[serde(default = "d_5")]
    pub contours: usize,
    /// λ grid per ξ for the Evans CSV (`re` and `im` from -2 to 2).
    #[serde(default = "d_8")]
    pub lambda_grid: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolventTask {
    /// Points per axis of the (x, y) grid.
    #[serde(default = "d_32")]
    pub grid: usize,
    /// Number of random (λ, ξ) pairs.
    #[serde(default = "d_10")]
    pub pairs: usize,
    #[serde(rename = "images_J", default = "d_10")]
    pub images_j: usize,
    #[serde(default = "d_images_lambda")]
    pub images_lambda: f64,
}

fn d_images_lambda() -> f64 {
    4.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumTask {
    #[serde(default = "d_64")]
    pub xi_samples: usize,
    #[serde(default = "d_xi_max")]
    pub xi_max: f64,
    #[serde(default = "d_21")]
    pub n_xi: usize,
}

fn d_xi_max() -> f64 {
    0.1 * std::f64::consts::PI
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenTask {
    #[serde(default = "d_times")]
    pub times: Vec<f64>,
    #[serde(default = "d_64")]
    pub n_xi: usize,
    #[serde(default = "d_64")]
    pub nc: usize,
    #[serde(default = "d_8")]
    pub ny: usize,
    /// Also run the direct-evolution route and compare.
    #[serde(default)]
    pub direct: bool,
    #[serde(default = "d_dt")]
    pub dt: f64,
    #[serde(default = "d_64")]
    pub ring: usize,
    /// Compute the leading-term split over `times`.
    #[serde(default)]
    pub split: bool,
}

fn d_times() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}
fn d_dt() -> f64 {
    4e-4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatTask {
    #[serde(default = "d_q")]
    pub q: u32,
    #[serde(default = "d_class")]
    pub class: u8,
    #[serde(rename = "E0", default = "d_e0")]
    pub e0: f64,
    #[serde(rename = "T", default = "d_t")]
    pub t_final: f64,
    #[serde(default = "d_r")]
    pub r: f64,
    #[serde(rename = "M", default = "d_m")]
    pub m: f64,
    #[serde(default = "d_heat_dt")]
    pub dt: f64,
}

fn d_q() -> u32 {
    4
}
fn d_class() -> u8 {
    1
}
fn d_e0() -> f64 {
    0.01
}
fn d_t() -> f64 {
    500.0
}
fn d_r() -> f64 {
    3.0
}
fn d_m() -> f64 {
    2.0
}
fn d_heat_dt() -> f64 {
    0.05
}

impl HeatTask {
    pub fn data_class(&self) -> DataClass {
        match self.class {
            1 => DataClass::Weighted,
            2 => DataClass::Gaussian { m: self.m },
            _ => DataClass::Algebraic { r: self.r },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InequalityTask {
    #[serde(default = "d_200")]
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulationTask {
    #[serde(rename = "E0", default = "d_mod_e0")]
    pub e0: f64,
    #[serde(rename = "T", default = "d_mod_t")]
    pub t_final: f64,
    #[serde(default = "d_256")]
    pub ring: usize,
    #[serde(default = "d_32")]
    pub nc: usize,
    #[serde(default = "d_ds")]
    pub ds: f64,
    #[serde(rename = "M", default = "d_m")]
    pub m: f64,
}

fn d_mod_e0() -> f64 {
    0.005
}
fn d_mod_t() -> f64 {
    50.0
}
fn d_ds() -> f64 {
    0.25
}

fn d_5() -> usize {
    5
}
fn d_8() -> usize {
    8
}
fn d_10() -> usize {
    10
}
fn d_16() -> usize {
    16
}
fn d_21() -> usize {
    21
}
fn d_32() -> usize {
    32
}
fn d_64() -> usize {
    64
}
fn d_200() -> usize {
    200
}
fn d_256() -> usize {
    256
}
fn d_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub output: PathBuf,
    #[serde(default = "d_seed")]
    pub seed: u64,
    pub fixture: FixtureConfig,
    #[serde(default)]
    pub numerics: Numerics,
    pub evans: Option<EvansTask>,
    pub resolvent: Option<ResolventTask>,
    pub spectrum: Option<SpectrumTask>,
    pub green: Option<GreenTask>,
    pub heat: Option<HeatTask>,
    pub inequalities: Option<InequalityTask>,
    pub modulation: Option<ModulationTask>,
}

fn bad(key: &str, reason: impl Into<String>) -> Error {
    Error::Config { key: key.to_string(), reason: reason.into() }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(key, format!("must be positive and finite, got {v}")))
    }
}

fn at_least(key: &str, v: usize, min: usize) -> Result<()> {
    if v >= min {
        Ok(())
    } else {
        Err(bad(key, format!("{key} ≥ {min} required, got {v}")))
    }
}

fn even(key: &str, v: usize) -> Result<()> {
    if v % 2 == 0 {
        Ok(())
    } else {
        Err(bad(key, format!("must be even, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let key = e
                .message()
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "<document>".into());
            bad(&key, e.to_string().trim().replace('\n', " "))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
        let mut cfg = Self::parse(&text)?;
        // Relative paths are resolved against the config file's directory.
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.output.is_relative() {
            cfg.output = base.join(&cfg.output);
        }
        if let Some(p) = cfg.fixture.path.as_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(bad("name", "must not be empty"));
        }
        if self.output.as_os_str().is_empty() {
            return Err(bad("output", "must not be empty"));
        }
        let f = &self.fixture;
        if !(f.a.is_finite() && f.c0.is_finite()) {
            return Err(bad("fixture.a", "must be finite"));
        }
        if f.grid < 16 || f.grid % 2 != 0 {
            return Err(bad("fixture.grid", format!("must be even and ≥ 16, got {}", f.grid)));
        }
        match f.kind {
            FixtureKind::Manufactured if !(f.amp.abs() < 1.0) => {
                return Err(bad("fixture.amp", "|amp| < 1 keeps p positive"));
            }
            FixtureKind::File if f.path.is_none() => return Err(bad("fixture.path", "required for kind = \"file\"")),
            _ => {}
        }
        at_least("numerics.K", self.numerics.k, MIN_K).map_err(|_| bad("numerics.K", format!("K ≥ {MIN_K} required, got {}", self.numerics.k)))?;
        let tol = self.numerics.tol;
        if !(tol > 0.0 && tol <= 1e-4) {
            return Err(bad("numerics.tol", format!("must lie in (0, 1e-4], got {tol}")));
        }
        if let Some(t) = &self.evans {
            at_least("evans.xi_count", t.xi_count, 1)?;
            at_least("evans.lambda_grid", t.lambda_grid, 2)?;
        }
        if let Some(t) = &self.resolvent {
            at_least("resolvent.grid", t.grid, 2)?;
            at_least("resolvent.pairs", t.pairs, 1)?;
            at_least("resolvent.images_J", t.images_j, 1)?;
            positive("resolvent.images_lambda", t.images_lambda)?;
        }
        if let Some(t) = &self.spectrum {
            at_least("spectrum.xi_samples", t.xi_samples, 32)?;
            at_least("spectrum.n_xi", t.n_xi, 5)?;
            if t.n_xi % 2 == 0 {
                return Err(bad("spectrum.n_xi", "must be odd so the grid contains ξ = 0"));
            }
            if !(t.xi_max > 0.0 && t.xi_max <= 0.5) {
                return Err(bad("spectrum.xi_max", "must lie in (0, 0.5]"));
            }
        }
        if let Some(t) = &self.green {
            if t.times.is_empty() {
                return Err(bad("green.times", "at least one time required"));
            }
            for &s in &t.times {
                positive("green.times", s)?;
            }
            at_least("green.n_xi", t.n_xi, 1)?;
            at_least("green.nc", t.nc, 2 * self.numerics.k + 1)
                .map_err(|_| bad("green.nc", format!("nc ≥ 2K+1 = {} required", 2 * self.numerics.k + 1)))?;
            at_least("green.ny", t.ny, 1)?;
            if t.nc % t.ny != 0 {
                return Err(bad("green.ny", "must divide nc"));
            }
            if t.direct {
                positive("green.dt", t.dt)?;
                at_least("green.ring", t.ring, 4)?;
                even("green.ring", t.ring)?;
            }
            if t.split && t.times.len() < 3 {
                return Err(bad("green.times", "the split fit needs at least 3 times"));
            }
        }
        if let Some(t) = &self.heat {
            if t.q < 2 {
                return Err(bad("heat.q", format!("q ≥ 2 required, got {}", t.q)));
            }
            if !(1..=3).contains(&t.class) {
                return Err(bad("heat.class", format!("must be 1, 2 or 3, got {}", t.class)));
            }
            positive("heat.E0", t.e0)?;
            if t.e0 > 0.05 {
                return Err(bad("heat.E0", "small-data regime requires E0 ≤ 0.05"));
            }
            positive("heat.T", t.t_final)?;
            positive("heat.dt", t.dt)?;
            positive("heat.M", t.m)?;
            if t.class == 3 && !(t.r > 2.0) {
                return Err(bad("heat.r", "algebraic class needs r > 2"));
            }
        }
        if let Some(t) = &self.inequalities {
            at_least("inequalities.samples", t.samples, 10)?;
        }
        if let Some(t) = &self.modulation {
            if f.kind == FixtureKind::File {
                return Err(bad("modulation", "needs an analytic scalar fixture"));
            }
            positive("modulation.E0", t.e0)?;
            positive("modulation.T", t.t_final)?;
            positive("modulation.ds", t.ds)?;
            positive("modulation.M", t.m)?;
            at_least("modulation.ring", t.ring, 8)?;
            even("modulation.ring", t.ring)?;
            at_least("modulation.nc", t.nc, 8)?;
            even("modulation.nc", t.nc)?;
        }
        Ok(())
    }

    pub fn build_profile(&self) -> Result<WaveProfile> {
        self.fixture.build()
    }
}

impl FixtureConfig {
    pub fn build(&self) -> Result<WaveProfile> {
        let one = |v: f64| DMatrix::from_element(1, 1, v);
        match self.kind {
            FixtureKind::Heat => profile::make_constant_profile(1, 0.0, &one(0.0), self.grid),
            FixtureKind::Advection => profile::make_constant_profile(1, -self.a, &one(0.0), self.grid),
            FixtureKind::Constant => profile::make_constant_profile(1, self.a, &one(self.c0), self.grid),
            FixtureKind::Manufactured => profile::manufactured_sine(self.amp, self.a, self.grid),
            FixtureKind::File => match &self.path {
                Some(p) => WaveProfile::load(p),
                None => Err(bad("fixture.path", "required for kind = \"file\"")),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_and_defaults() {
        let c = ExperimentConfig::parse("name = \"x\"\noutput = \"o\"\n[fixture]\nkind = \"heat\"\n[green]\n").unwrap();
        assert_eq!(c.numerics.k, 16);
        assert_eq!(c.green.unwrap().times, vec![0.5, 1.0, 2.0]);
        assert!(c.evans.is_none());
    }

    #[test]
    fn unknown_key_is_named() {
        let e = ExperimentConfig::parse("name = \"x\"\noutput = \"o\"\nbogus = 1\n[fixture]\nkind = \"heat\"\n").unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
    }
}
