//! Experiment orchestration: runs the tasks of an [`ExperimentConfig`],
//! writes CSV/JSON artifacts, a summary and a hashed manifest.
//!
//! Artifacts are written to a staging directory next to the output
//! directory and moved into place only when every task succeeded.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::bloch;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::floquet::{self, FloquetSystem};
use crate::green::{self, BlochParams, DirectParams, GreenField, Kernel};
use crate::linalg::{c, cr, C64};
use crate::oracle;
use crate::profile::WaveProfile;
use crate::resolvent::{self, KernelField};
use crate::sim::{heat, inequalities, modulation};

pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub module: String,
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    fn le(module: &str, name: &str, value: f64, bound: f64) -> Self {
        Check { module: module.into(), name: name.into(), value, bound, pass: value <= bound }
    }

    fn flag(module: &str, name: &str, pass: bool) -> Self {
        Check { module: module.into(), name: name.into(), value: pass as u8 as f64, bound: 1.0, pass }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub seed: u64,
    pub fixture: Value,
    pub numerics: Value,
    pub checks: Vec<Check>,
    pub reports: BTreeMap<String, Value>,
    pub all_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub output: PathBuf,
    pub summary: Summary,
    pub manifest: Vec<ManifestEntry>,
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source: e }
}

/// Fixed-width exponent notation with 17 significant digits.
pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn normalize(v: Value) -> Value {
    match v {
        Value::Number(n) if !(n.is_i64() || n.is_u64()) => match n.as_f64() {
            Some(f) => fmt(f).parse::<serde_json::Number>().map(Value::Number).unwrap_or(Value::Null),
            None => Value::Null,
        },
        Value::Array(a) => Value::Array(a.into_iter().map(normalize).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, normalize(v))).collect()),
        other => other,
    }
}

/// Serializable value with every float rendered with 17 significant digits.
pub fn to_value<T: Serialize>(v: &T) -> Value {
    normalize(serde_json::to_value(v).expect("report types serialize"))
}

pub fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(&to_value(v)).expect("serializable");
    s.push('\n');
    s
}

/// CSV with a header row; every float formatted by [`fmt`].
pub fn to_csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r.iter().map(|&v| fmt(v))).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Entries for every regular file in `dir` except the manifest itself.
pub fn build_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for ent in fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let ent = ent.map_err(|e| io_err(dir, e))?;
        let path = ent.path();
        let name = ent.file_name().to_string_lossy().into_owned();
        if name == MANIFEST_FILE || !path.is_file() {
            continue;
        }
        let bytes = ent.metadata().map_err(|e| io_err(&path, e))?.len();
        out.push(ManifestEntry { path: name, bytes, sha256: sha256_file(&path)? });
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

/// Recompute hashes; returns the entries that differ or are missing, plus
/// files present in `dir` but absent from the manifest.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let listed: Vec<ManifestEntry> =
        serde_json::from_str(&text).map_err(|e| Error::Parse { line: e.line(), msg: e.to_string() })?;
    let actual = build_manifest(dir)?;
    let mut problems = Vec::new();
    for e in &listed {
        match actual.iter().find(|a| a.path == e.path) {
            None => problems.push(format!("missing: {}", e.path)),
            Some(a) if a != e => problems.push(format!("hash mismatch: {}", e.path)),
            _ => {}
        }
    }
    for a in &actual {
        if !listed.iter().any(|e| e.path == a.path) {
            problems.push(format!("not in manifest: {}", a.path));
        }
    }
    Ok(problems)
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    profile: WaveProfile,
    dir: PathBuf,
    checks: Vec<Check>,
    reports: BTreeMap<String, Value>,
}

impl Ctx<'_> {
    fn write(&self, name: &str, text: &str) -> Result<()> {
        write_file(&self.dir.join(name), text)
    }

    /// `(speed, c0)` when the fixture is a constant scalar operator
    /// `∂² + speed·∂ + c0` with closed-form references.
    fn constant_scalar(&self) -> Option<(f64, f64)> {
        if self.profile.dim() != 1 || !self.profile.is_constant() {
            return None;
        }
        Some((self.profile.speed(), self.profile.coeff_at_index(0)[(0, 0)]))
    }
}

/// Run every task of `cfg`. On error the staging directory is removed and
/// the previous contents of the output directory are left untouched.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let out = cfg.output.clone();
    if out.exists() && !out.join(MANIFEST_FILE).exists() {
        let empty = fs::read_dir(&out).map_err(|e| io_err(&out, e))?.next().is_none();
        if !empty {
            return Err(Error::Precondition(format!(
                "output directory {} exists and was not produced by a previous run",
                out.display()
            )));
        }
    }
    let leaf = out.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    let staging = out.with_file_name(format!(".{leaf}.partial"));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| io_err(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| io_err(&staging, e))?;
    match run_into(cfg, &staging) {
        Ok(summary) => {
            if out.exists() {
                fs::remove_dir_all(&out).map_err(|e| io_err(&out, e))?;
            }
            fs::rename(&staging, &out).map_err(|e| io_err(&out, e))?;
            let manifest = build_manifest(&out)?;
            Ok(RunOutcome { output: out, summary, manifest })
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

fn run_into(cfg: &ExperimentConfig, dir: &Path) -> Result<Summary> {
    let profile = cfg
        .build_profile()
        .map_err(|e| e.in_task("profile", "build", format!("kind={:?}", cfg.fixture.kind)))?;
    let mut ctx = Ctx { cfg, profile, dir: dir.to_path_buf(), checks: Vec::new(), reports: BTreeMap::new() };
    let k = cfg.numerics.k;
    ctx.write("profile.txt", &ctx.profile.to_text())?;
    if let Some(t) = &cfg.evans {
        evans_task(&mut ctx, t).map_err(|e| e.in_task("evans", "scan", format!("K={k} xi_count={}", t.xi_count)))?;
    }
    if let Some(t) = &cfg.resolvent {
        resolvent_task(&mut ctx, t)
            .map_err(|e| e.in_task("resolvent", "kernel", format!("grid={} pairs={} J={}", t.grid, t.pairs, t.images_j)))?;
    }
    if let Some(t) = &cfg.spectrum {
        spectrum_task(&mut ctx, t)
            .map_err(|e| e.in_task("spectrum", "branch", format!("K={k} xi_samples={} n_xi={}", t.xi_samples, t.n_xi)))?;
    }
    if let Some(t) = &cfg.green {
        green_task(&mut ctx, t).map_err(|e| {
            e.in_task("green", "synth", format!("K={k} n_xi={} nc={} ny={} times={:?}", t.n_xi, t.nc, t.ny, t.times))
        })?;
    }
    if let Some(t) = &cfg.heat {
        heat_task(&mut ctx, t).map_err(|e| {
            e.in_task("simulate", "heat-q", format!("q={} class={} E0={} T={}", t.q, t.class, t.e0, t.t_final))
        })?;
    }
    if let Some(t) = &cfg.inequalities {
        let reports = inequalities::inequality_suite(t.samples, cfg.seed)
            .map_err(|e| e.in_task("simulate", "inequalities", format!("samples={} seed={}", t.samples, cfg.seed)))?;
        for r in &reports {
            let name = to_value(&r.lemma).as_str().unwrap_or("lemma").to_string();
            ctx.checks.push(Check::flag("inequalities", &name, r.pass));
        }
        ctx.write("inequalities.json", &to_json(&reports))?;
        ctx.reports.insert("inequalities".into(), to_value(&reports));
    }
    if let Some(t) = &cfg.modulation {
        modulation_task(&mut ctx, t).map_err(|e| {
            e.in_task("simulate", "modulation", format!("E0={} T={} ring={} nc={} ds={}", t.e0, t.t_final, t.ring, t.nc, t.ds))
        })?;
    }
    let all_pass = ctx.checks.iter().all(|c| c.pass);
    let summary = Summary {
        name: cfg.name.clone(),
        seed: cfg.seed,
        fixture: to_value(&cfg.fixture),
        numerics: to_value(&cfg.numerics),
        checks: ctx.checks,
        reports: ctx.reports,
        all_pass,
    };
    write_file(&dir.join(SUMMARY_FILE), &to_json(&summary))?;
    let manifest = build_manifest(dir)?;
    write_file(&dir.join(MANIFEST_FILE), &to_json(&manifest))?;
    Ok(summary)
}

/// `D(λ,ξ)` of the constant scalar operator `∂² + s∂ + c0`:
/// `Π(e^{μ} − e^{iξ})` over the roots of `μ² + sμ + c0 − λ = 0`.
pub fn constant_evans(speed: f64, c0: f64, lambda: C64, xi: f64) -> C64 {
    let disc = crate::linalg::csqrt(cr(speed * speed) + (lambda - c0) * 4.0);
    let m1 = (cr(-speed) + disc) * 0.5;
    let m2 = (cr(-speed) - disc) * 0.5;
    let e = C64::from_polar(1.0, xi);
    (m1.exp() - e) * (m2.exp() - e)
}

/// Critical-branch eigenvalue `−ξ² + i·speed·ξ + c0` of a constant scalar fixture.
pub fn constant_dispersion(speed: f64, c0: f64, xi: f64) -> C64 {
    c(c0 - xi * xi, speed * xi)
}

/// Galerkin eigenvalue of largest real part at ξ.
pub fn top_eigenvalue(profile: &WaveProfile, xi: f64, k: usize) -> Result<C64> {
    let s = bloch::spectrum(profile, xi, k)?;
    Ok(s.values
        .iter()
        .copied()
        .fold(None::<C64>, |m, z| match m {
            Some(w) if w.re >= z.re => Some(w),
            _ => Some(z),
        })
        .expect("nonempty spectrum"))
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (a + b)];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn evans_task(ctx: &mut Ctx, t: &crate::config::EvansTask) -> Result<()> {
    let tol = ctx.cfg.numerics.tol;
    let k = ctx.cfg.numerics.k;
    let xis = linspace(-PI / 2.0, PI / 2.0, t.xi_count);
    let mut rows = Vec::new();
    let mut worst_galerkin = 0.0f64;
    let mut worst_exact = 0.0f64;
    let cs = ctx.constant_scalar();
    for &xi in &xis {
        let guess = top_eigenvalue(&ctx.profile, xi, k)?;
        let root = floquet::evans_root(&ctx.profile, xi, guess, tol)?;
        worst_galerkin = worst_galerkin.max((root - guess).norm());
        if let Some((s, c0)) = cs {
            worst_exact = worst_exact.max((root - constant_dispersion(s, c0, xi)).norm());
        }
        rows.push(vec![xi, root.re, root.im, guess.re, guess.im]);
    }
    ctx.write("dispersion.csv", &to_csv(&["xi", "re_lambda", "im_lambda", "re_galerkin", "im_galerkin"], &rows))?;
    ctx.checks.push(Check::le("evans", "dispersion-vs-galerkin", worst_galerkin, 1e-6));
    if cs.is_some() {
        ctx.checks.push(Check::le("evans", "dispersion-vs-closed-form", worst_exact, 1e-6));
    }

    let lam_axis = linspace(-2.0, 2.0, t.lambda_grid);
    let scan_xi = [xis[0], xis[xis.len() / 2], *xis.last().unwrap()];
    let mut rows = Vec::new();
    let mut worst_d = 0.0f64;
    for &xi in &scan_xi {
        for &re in &lam_axis {
            for &im in &lam_axis {
                let lam = c(re, im);
                let d = floquet::evans(&ctx.profile, lam, xi, tol)?;
                if let Some((s, c0)) = cs {
                    let e = constant_evans(s, c0, lam, xi);
                    worst_d = worst_d.max((d - e).norm() / e.norm().max(1.0));
                }
                rows.push(vec![xi, re, im, d.re, d.im]);
            }
        }
    }
    ctx.write("evans.csv", &to_csv(&["xi", "re_lambda", "im_lambda", "re_D", "im_D"], &rows))?;
    if cs.is_some() {
        ctx.checks.push(Check::le("evans", "evans-vs-closed-form", worst_d, 1e-8));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    let mut mismatches = 0usize;
    let mut contours = Vec::new();
    while contours.len() < t.contours {
        let center = c(rng.gen_range(-3.0..1.0), rng.gen_range(-3.0..3.0));
        let radius = rng.gen_range(0.5..2.0);
        let xi = rng.gen_range(-PI..PI);
        let eig = bloch::spectrum(&ctx.profile, xi, k)?.values;
        // Keep eigenvalues away from the contour so the count is unambiguous.
        if eig.iter().any(|z| ((z - center).norm() - radius).abs() < 0.05) {
            continue;
        }
        let brute = eig.iter().filter(|z| (*z - center).norm() < radius).count() as i64;
        let wind = floquet::winding_number(&ctx.profile, xi, &floquet::circle(center, radius, 32), tol)?;
        if wind != brute {
            mismatches += 1;
        }
        contours.push(serde_json::json!({
            "xi": xi, "center": [center.re, center.im], "radius": radius, "winding": wind, "galerkin_count": brute
        }));
    }
    ctx.checks.push(Check::le("evans", "winding-vs-galerkin-mismatches", mismatches as f64, 0.0));
    ctx.reports.insert("evans".into(), to_value(&serde_json::json!({ "contours": contours })));
    Ok(())
}

fn kernel_rows(f: &KernelField, xs: &[f64], ys: &[f64]) -> Vec<Vec<f64>> {
    let mut rows = Vec::new();
    for (iy, &y) in ys.iter().enumerate() {
        for (ix, &x) in xs.iter().enumerate() {
            let g = f.g(ix, iy)[(0, 0)];
            let dg = f.dg(ix, iy)[(0, 0)];
            rows.push(vec![x, y, g.re, g.im, dg.re, dg.im]);
        }
    }
    rows
}

pub const KERNEL_HEADER: [&str; 6] = ["x", "y", "re_G", "im_G", "re_Gx", "im_Gx"];

fn resolvent_task(ctx: &mut Ctx, t: &crate::config::ResolventTask) -> Result<()> {
    let tol = ctx.cfg.numerics.tol;
    let grid = resolvent::unit_grid(t.grid);
    let cs = ctx.constant_scalar();
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed.wrapping_add(1));
    let mut worst = 0.0f64;
    let mut pairs = Vec::new();
    for i in 0..t.pairs {
        let lam = c(rng.gen_range(0.5..50.0), rng.gen_range(-10.0..10.0));
        let xi = rng.gen_range(-PI..PI);
        let sys = FloquetSystem::new(&ctx.profile, xi, lam);
        let whole = resolvent::whole_line_kernel(&sys, &grid, &grid, tol)?;
        let per = resolvent::periodic_kernel(&sys, &grid, &grid, tol)?;
        if i == 0 {
            ctx.write("resolvent_whole.csv", &to_csv(&KERNEL_HEADER, &kernel_rows(&whole, &grid, &grid)))?;
            ctx.write("resolvent_periodic.csv", &to_csv(&KERNEL_HEADER, &kernel_rows(&per, &grid, &grid)))?;
        }
        if let Some((s, c0)) = cs {
            for (ix, &x) in grid.iter().enumerate() {
                for (iy, &y) in grid.iter().enumerate() {
                    let (gw, _) = oracle::constant_whole(-s, xi, lam - c0, x, y);
                    let (gp, _) = oracle::constant_periodic(-s, xi, lam - c0, x, y);
                    worst = worst.max((whole.g(ix, iy)[(0, 0)] - gw).norm() / gw.norm());
                    worst = worst.max((per.g(ix, iy)[(0, 0)] - gp).norm() / gp.norm());
                }
            }
        }
        pairs.push([lam.re, lam.im, xi]);
    }
    if cs.is_some() {
        ctx.checks.push(Check::le("resolvent", "kernels-vs-closed-form", worst, 1e-8));
    }
    let sys = FloquetSystem::new(&ctx.profile, 0.3, cr(t.images_lambda));
    let img_grid = resolvent::unit_grid(8);
    let rep = resolvent::method_of_images_check(&sys, t.images_j, &img_grid, &img_grid, tol)?;
    let ratio = images_ratio(&rep.deviations);
    let expected = (-rep.decay_rate).exp();
    ctx.checks.push(Check::le("resolvent", "images-deviation-at-J", rep.deviations[t.images_j], 1e-6));
    ctx.checks.push(Check::le("resolvent", "images-ratio-relative-error", (ratio / expected - 1.0).abs(), 0.15));
    ctx.reports.insert(
        "resolvent".into(),
        to_value(&serde_json::json!({ "pairs": pairs, "images": rep, "measured_ratio": ratio, "expected_ratio": expected })),
    );
    Ok(())
}

/// Geometric ratio of the image-sum deviations, fitted over the J range
/// where the deviation is above round-off.
pub fn images_ratio(dev: &[f64]) -> f64 {
    let floor = 1e-13 * dev[0].max(1e-300);
    let pts: Vec<(f64, f64)> = dev
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, &d)| d > floor)
        .map(|(j, &d)| (j as f64, d.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let (_, slope) = crate::fit::linear_fit(&pts.iter().map(|p| p.0).collect::<Vec<_>>(), &pts.iter().map(|p| p.1).collect::<Vec<_>>());
    slope.exp()
}

fn spectrum_task(ctx: &mut Ctx, t: &crate::config::SpectrumTask) -> Result<()> {
    let k = ctx.cfg.numerics.k;
    let stab = bloch::check_diffusive_stability(&ctx.profile, k, t.xi_samples)?;
    let br = bloch::critical_branch(&ctx.profile, k, t.xi_max, t.n_xi)?;
    let rows: Vec<Vec<f64>> =
        br.xi_grid.iter().zip(&br.lambda_values).map(|(&xi, l)| vec![xi, l.re, l.im]).collect();
    ctx.write("branch.csv", &to_csv(&["xi", "re_lambda", "im_lambda"], &rows))?;
    let report = stability_json(&stab, &br);
    ctx.write("stability.json", &to_json(&report))?;
    if let Some((s, c0)) = ctx.constant_scalar() {
        ctx.checks.push(Check::le("spectrum", "lambda1-vs-closed-form", (br.lambda1 - c(0.0, s)).norm(), 1e-6));
        ctx.checks.push(Check::le("spectrum", "lambda2-vs-closed-form", (br.lambda2 - cr(-1.0)).norm(), 1e-6));
        if s == 0.0 {
            ctx.checks.push(Check::le("spectrum", "lambda1-symmetric", br.lambda1.norm(), 1e-10));
        }
        let _ = c0;
    }
    ctx.reports.insert("spectrum".into(), to_value(&report));
    Ok(())
}

pub fn stability_json(stab: &bloch::StabilityReport, br: &bloch::SpectralBranch) -> Value {
    serde_json::json!({
        "D1": stab.d1,
        "gap": stab.gap,
        "D2": stab.d2,
        "theta": stab.theta,
        "b": br.b,
        "a": br.a_eff.re,
        "lambda1": [br.lambda1.re, br.lambda1.im],
        "lambda2": [br.lambda2.re, br.lambda2.im],
        "max_re_outer": stab.max_re_outer,
        "zero_mode_source": br.zero_mode_source,
    })
}

pub const GREEN_HEADER: [&str; 4] = ["x", "y", "re_G", "im_G"];

/// Rows `(x, y, Re G, Im G)` of the (0,0) entry.
pub fn green_rows(f: &GreenField) -> Vec<Vec<f64>> {
    let mut rows = Vec::with_capacity(f.xs.len() * f.ys.len());
    for (iy, &y) in f.ys.iter().enumerate() {
        for (ix, &x) in f.xs.iter().enumerate() {
            let g = f.entry(ix, iy, 0, 0);
            rows.push(vec![x, y, g.re, g.im]);
        }
    }
    rows
}

fn time_tag(t: f64) -> String {
    format!("{t}").replace('.', "p")
}

fn green_task(ctx: &mut Ctx, t: &crate::config::GreenTask) -> Result<()> {
    let params = BlochParams { k: ctx.cfg.numerics.k, n_xi: t.n_xi, nc: t.nc, ny: t.ny };
    let fields = green::green_bloch_multi(&ctx.profile, &t.times, params, Kernel::G)?;
    let mut worst_exact = 0.0f64;
    let cs = ctx.constant_scalar();
    for f in &fields {
        ctx.write(&format!("green_bloch_t{}.csv", time_tag(f.t)), &to_csv(&GREEN_HEADER, &green_rows(f)))?;
        if let Some((s, c0)) = cs {
            let scale = f.max_abs();
            for (iy, &y) in f.ys.iter().enumerate() {
                for (ix, &x) in f.xs.iter().enumerate() {
                    let e = (c0 * f.t).exp() * oracle::heat_kernel(x - y + s * f.t, f.t, 1.0);
                    worst_exact = worst_exact.max((f.entry(ix, iy, 0, 0) - cr(e)).norm() / scale);
                }
            }
        }
    }
    let mut report = serde_json::Map::new();
    if cs.is_some() {
        ctx.checks.push(Check::le("green", "bloch-vs-closed-form", worst_exact, 1e-8));
    }
    let imag = fields.iter().map(|f| f.max_imag() / f.max_abs()).fold(0.0, f64::max);
    ctx.checks.push(Check::le("green", "relative-imaginary-part", imag, 1e-10));
    if t.direct {
        let dp = DirectParams { ring: t.ring, nc: t.nc, dt: t.dt, sigma: 1.0 / 64.0, ny: t.ny };
        let direct = green::green_direct(&ctx.profile, &t.times, dp)?;
        let mut dists = Vec::new();
        for (b, d) in fields.iter().zip(&direct) {
            ctx.write(&format!("green_direct_t{}.csv", time_tag(d.t)), &to_csv(&GREEN_HEADER, &green_rows(d)))?;
            dists.push(green::relative_l1(b, d)?);
        }
        let worst = dists.iter().copied().fold(0.0, f64::max);
        ctx.checks.push(Check::le("green", "bloch-vs-direct-relative-l1", worst, 1e-3));
        report.insert("route_distance".into(), serde_json::json!(dists));
    }
    if t.split {
        let br = bloch::critical_branch(&ctx.profile, ctx.cfg.numerics.k, 0.1 * PI, 21)?;
        let split = green::leading_split(&fields, &br)?;
        ctx.write("split.json", &to_json(&split_json(&split)))?;
        if split.exact {
            ctx.checks.push(Check::flag("green", "split-residual-exact", true));
        } else {
            ctx.checks.push(Check::le("green", "split-slope", split.slope, -0.8));
            ctx.checks.push(Check::flag("green", "split-M_res-positive", split.m_res > 0.0));
            ctx.checks.push(Check::le("green", "split-scatter", split.scatter, 0.5));
        }
        report.insert("split".into(), to_value(&split));
    }
    report.insert("times".into(), serde_json::json!(t.times));
    ctx.reports.insert("green".into(), to_value(&Value::Object(report)));
    Ok(())
}

pub fn split_json(s: &green::LeadingTermSplit) -> Value {
    serde_json::json!({
        "a": s.a, "b": s.b, "C_res": s.c_res, "M_res": s.m_res, "slope": s.slope, "scatter": s.scatter,
    })
}

/// Time-series rows `(t, |u|_p…, dev_p…)` of a heat-q report.
pub fn heat_rows(r: &heat::DecayReport) -> (Vec<&'static str>, Vec<Vec<f64>>) {
    let keys = ["1", "2", "inf"];
    let header = vec!["t", "norm_1", "norm_2", "norm_inf", "dev_1", "dev_2", "dev_inf"];
    let rows = r
        .times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let mut row = vec![t];
            row.extend(keys.iter().map(|k| r.norms.get(*k).map_or(f64::NAN, |v| v[i])));
            row.extend(keys.iter().map(|k| r.deviation.get(*k).map_or(f64::NAN, |v| v[i])));
            row
        })
        .collect();
    (header, rows)
}

/// Rate checks for class-1 data: `|u|_p` slopes near `−½(1−1/p)` and the
/// deviation from `U_* k` decaying at least like `t^{-0.85}`.
pub fn class1_rate_checks(r: &heat::DecayReport) -> Vec<Check> {
    let mut out = Vec::new();
    for (key, p) in [("1", 1.0), ("2", 2.0), ("inf", f64::INFINITY)] {
        if let Some(s) = r.slopes.get(key) {
            let target = -0.5 * (1.0 - 1.0 / p);
            out.push(Check::le("heat", &format!("norm-slope-p{key}"), (s.value - target).abs(), 0.07));
        }
    }
    if let Some(s) = r.deviation_slopes.get("inf") {
        out.push(Check::le("heat", "deviation-slope-inf", s.value, -0.85));
    }
    out
}

fn heat_task(ctx: &mut Ctx, t: &crate::config::HeatTask) -> Result<()> {
    let grid = heat::Grid::for_run(t.t_final, 1.0);
    let u0 = heat::InitialData::new(t.data_class(), t.e0, grid)?;
    let opts = heat::DecayOptions { dt: t.dt, seed: ctx.cfg.seed, ..Default::default() };
    let rep = heat::decay_report_heat(&u0, t.q, t.t_final, &[1.0, 2.0, f64::INFINITY], opts)?;
    let (header, rows) = heat_rows(&rep);
    ctx.write("heat_timeseries.csv", &to_csv(&header, &rows))?;
    ctx.write("heat_report.json", &to_json(&rep))?;
    if t.class == 1 {
        ctx.checks.extend(class1_rate_checks(&rep));
    }
    for e in &rep.envelope_checks {
        ctx.checks.push(Check { module: "heat".into(), name: e.name.clone(), value: e.value, bound: e.bound, pass: e.pass });
    }
    ctx.reports.insert("heat".into(), to_value(&rep));
    Ok(())
}

/// `sup_{t≥2}|v|_∞(1+t)` relative to its value at the first time ≥ 2.
pub fn weighted_growth(r: &modulation::ModulationReport) -> f64 {
    let w: Vec<f64> = r.times.iter().zip(&r.v_sup_weighted).filter(|(t, _)| **t >= 2.0).map(|(_, v)| *v).collect();
    match w.first() {
        Some(&first) if first > 0.0 => w.iter().copied().fold(0.0, f64::max) / first,
        _ => f64::NAN,
    }
}

pub const MAX_E0_HALVINGS: usize = 3;

fn modulation_task(ctx: &mut Ctx, t: &crate::config::ModulationTask) -> Result<()> {
    if ctx.profile.dim() != 1 {
        return Err(Error::Precondition("modulation needs a scalar profile".into()));
    }
    let br = bloch::critical_branch(&ctx.profile, ctx.cfg.numerics.k, 0.1 * PI, 21)?;
    let params = modulation::ModulationParams::new(t.ring, t.nc, t.ds, t.t_final);
    // Plain Picard; a divergent iteration is retried with E0 halved.
    let mut e0 = t.e0;
    let mut halvings = 0;
    let rep = loop {
        let v0 = heat::InitialData::new(heat::DataClass::Gaussian { m: t.m }, e0, params.grid())?;
        let (_, rep) = modulation::modulation_pipeline(&ctx.profile, &br, &v0.samples, &params)?;
        if rep.converged || halvings == MAX_E0_HALVINGS {
            break rep;
        }
        e0 /= 2.0;
        halvings += 1;
    };
    let rows: Vec<Vec<f64>> = (0..rep.times.len())
        .map(|i| {
            vec![
                rep.times[i],
                rep.v_sup[i],
                rep.v_sup_weighted[i],
                rep.psi_sup[i],
                rep.deviation[0][i],
                rep.deviation[1][i],
                rep.deviation[2][i],
            ]
        })
        .collect();
    ctx.write(
        "modulation_timeseries.csv",
        &to_csv(&["t", "v_sup", "v_sup_weighted", "psi_sup", "dev_1", "dev_2", "dev_inf"], &rows),
    )?;
    ctx.write("modulation_report.json", &to_json(&rep))?;
    ctx.checks.push(Check::flag("modulation", "picard-converged", rep.converged));
    ctx.checks.push(Check::le("modulation", "E0-halvings", halvings as f64, 0.0));
    ctx.checks.push(Check::le("modulation", "contraction-ratio", rep.max_contraction_ratio, 0.5));
    ctx.checks.push(Check::le("modulation", "linear-identity-defect", rep.linear_identity_defect, 1e-10));
    ctx.checks.push(Check::le("modulation", "weighted-sup-growth", weighted_growth(&rep), 2.0));
    ctx.reports.insert("modulation".into(), to_value(&rep));
    Ok(())
}
