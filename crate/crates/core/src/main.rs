use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use floquet_green::config::{ExperimentConfig, FixtureConfig, FixtureKind};
use floquet_green::green::{self, BlochParams, ContourParams, DirectParams, GreenField, Kernel};
use floquet_green::linalg::{c, C64};
use floquet_green::profile::{self, WaveProfile};
use floquet_green::resolvent;
use floquet_green::run::{self, fmt, to_csv, to_json};
use floquet_green::sim::{heat, inequalities, modulation};
use floquet_green::{bloch, floquet, Error, Result};

#[derive(Parser)]
#[command(name = "floquet-green", version, about = "Bloch/Floquet kernels and Green functions of periodic parabolic operators")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build or check coefficient profiles.
    #[command(subcommand)]
    Profile(ProfileCmd),
    /// Periodic Evans function.
    #[command(subcommand)]
    Evans(EvansCmd),
    /// Bloch spectrum, critical branch and stability report.
    #[command(subcommand)]
    Spectrum(SpectrumCmd),
    /// Resolvent kernels.
    #[command(subcommand)]
    Resolvent(ResolventCmd),
    /// Time-domain Green functions.
    #[command(subcommand)]
    Green(GreenCmd),
    /// Nonlinear simulations and inequality checks.
    #[command(subcommand)]
    Simulate(SimulateCmd),
    /// Verify a run directory against its manifest and print its checks.
    Report { dir: PathBuf },
    /// Run an experiment described by a config file.
    Run { config: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Heat,
    Advection,
    Constant,
    Manufactured,
}

/// Where the operator comes from: a profile file or a built-in fixture.
#[derive(Args, Clone)]
struct FixtureArgs {
    /// Profile file; overrides --fixture.
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "manufactured")]
    fixture: Kind,
    /// Drift for `advection`, speed for `constant`/`manufactured`.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    a: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    c0: f64,
    #[arg(long, default_value_t = 0.3)]
    amp: f64,
    #[arg(long, default_value_t = 64)]
    grid: usize,
}

impl FixtureArgs {
    fn build(&self) -> Result<WaveProfile> {
        let kind = match (&self.profile, self.fixture) {
            (Some(_), _) => FixtureKind::File,
            (None, Kind::Heat) => FixtureKind::Heat,
            (None, Kind::Advection) => FixtureKind::Advection,
            (None, Kind::Constant) => FixtureKind::Constant,
            (None, Kind::Manufactured) => FixtureKind::Manufactured,
        };
        FixtureConfig { kind, a: self.a, c0: self.c0, amp: self.amp, grid: self.grid, path: self.profile.clone() }.build()
    }
}

#[derive(Subcommand)]
enum ProfileCmd {
    /// Constant coefficient `df(ū) ≡ c0·I` with speed `a`.
    MakeConstant {
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        c0: f64,
        #[arg(long, default_value_t = 64)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scalar profile with exact zero mode `1 + amp·sin 2πx`.
    MakeManufactured {
        #[arg(long, default_value_t = 0.3)]
        amp: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, default_value_t = 64)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse a profile file and print its basic data.
    Validate { file: PathBuf },
}

#[derive(Subcommand)]
enum EvansCmd {
    /// D(λ,ξ) at one point.
    Eval {
        #[command(flatten)]
        fx: FixtureArgs,
        /// `re,im`
        #[arg(long, allow_hyphen_values = true)]
        lambda: String,
        #[arg(long, allow_hyphen_values = true)]
        xi: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// D on a rectangular λ grid; CSV (ξ, Reλ, Imλ, ReD, ImD).
    Scan {
        #[command(flatten)]
        fx: FixtureArgs,
        /// `re_lo:re_hi:n_re,im_lo:im_hi:n_im`
        #[arg(long, allow_hyphen_values = true, default_value = "-2:2:9,-2:2:9")]
        grid: String,
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        xi: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SpectrumCmd {
    /// Galerkin eigenvalues over ξ ∈ [-π, π); CSV (ξ, Reλ, Imλ).
    Scan {
        #[command(flatten)]
        fx: FixtureArgs,
        #[arg(long = "K", default_value_t = 16)]
        k: usize,
        #[arg(long, default_value_t = 64)]
        xi_samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Critical branch λ(ξ) near ξ = 0; CSV (ξ, Reλ, Imλ).
    Branch {
        #[command(flatten)]
        fx: FixtureArgs,
        #[arg(long = "K", default_value_t = 16)]
        k: usize,
        #[arg(long, default_value_t = 0.1 * PI)]
        xi_max: f64,
        #[arg(long, default_value_t = 21)]
        n_xi: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// JSON {D1, gap, D2, theta, b, lambda1, lambda2}.
    StabilityReport {
        #[command(flatten)]
        fx: FixtureArgs,
        #[arg(long = "K", default_value_t = 16)]
        k: usize,
        #[arg(long, default_value_t = 64)]
        xi_samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelKind {
    Whole,
    Periodic,
}

#[derive(Subcommand)]
enum ResolventCmd {
    /// Kernel on a uniform cell grid; CSV (x, y, Re G, Im G, Re G′, Im G′).
    Kernel {
        #[command(flatten)]
        fx: FixtureArgs,
        #[arg(long, allow_hyphen_values = true)]
        lambda: String,
        #[arg(long, allow_hyphen_values = true)]
        xi: f64,
        #[arg(long, value_enum, default_value = "periodic")]
        kind: KernelKind,
        #[arg(long, default_value_t = 32)]
        points: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Truncated image sums against the periodic kernel.
    ImagesCheck {
        #[command(flatten)]
        fx: FixtureArgs,
        #[arg(long = "J", default_value_t = 10)]
        j: usize,
        #[arg(long, allow_hyphen_values = true, default_value = "4,0")]
        lambda: String,
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.3)]
        xi: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// |G|·|λ|^{1/2} along rays in the right half-plane.
    HfScan {
        #[command(flatten)]
        fx: FixtureArgs,
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.3)]
        xi: f64,
        /// Ray angles in radians, comma separated.
        #[arg(long, allow_hyphen_values = true, default_value = "0,0.6,1.2")]
        rays: String,
        #[arg(long, default_value_t = 10.0)]
        from: f64,
        #[arg(long, default_value_t = 1e4)]
        to: f64,
        #[arg(long, default_value_t = 7)]
        count: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RouteArg {
    Bloch,
    Direct,
    Laplace,
}

#[derive(Args, Clone)]
struct GridArgs {
    #[arg(long = "K", default_value_t = 16)]
    k: usize,
    /// ξ quadrature nodes (equal to the ring length in cells).
    #[arg(long, default_value_t = 64)]
    n_xi: usize,
    #[arg(long, default_value_t = 64)]
    nc: usize,
    #[arg(long, default_value_t = 8)]
    ny: usize,
}

#[derive(Subcommand)]
enum GreenCmd {
    /// G(x, t; y); CSV (x, y, Re G, Im G) for the (0,0) entry.
    Synth {
        #[command(flatten)]
        fx: FixtureArgs,
        #[arg(long)]
        t: f64,
        #[arg(long, value_enum, default_value = "bloch")]
        route: RouteArg,
        #[command(flatten)]
        grid: GridArgs,
        /// Direct route time step.
        #[arg(long, default_value_t = 4e-4)]
        dt: f64,
        /// Laplace route contour nodes.
        #[arg(long, default_value_t = 64)]
        nodes: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Leading-term split and residual envelope fit; JSON {a, b, C_res, M_res, slope, scatter}.
    Split {
        #[command(flatten)]
        fx: FixtureArgs,
        #[arg(long, value_delimiter = ',', default_value = "2,3,5,8,13,20,30,50")]
        times: Vec<f64>,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SimulateCmd {
    /// `u_t = u_xx + u^q` decay report; writes report.json and timeseries.csv.
    HeatQ {
        #[arg(long, default_value_t = 4)]
        q: u32,
        #[arg(long, default_value_t = 1)]
        class: u8,
        #[arg(long = "E0", default_value_t = 0.01)]
        e0: f64,
        #[arg(long = "T", default_value_t = 500.0)]
        t_final: f64,
        #[arg(long, default_value_t = 3.0)]
        r: f64,
        #[arg(long = "M", default_value_t = 2.0)]
        m: f64,
        #[arg(long, default_value_t = 0.05)]
        dt: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value = "heat-q-out")]
        out_dir: PathBuf,
    },
    /// Modulated perturbation pipeline; writes report.json and timeseries.csv.
    Modulation {
        #[command(flatten)]
        fx: FixtureArgs,
        #[arg(long = "E0", default_value_t = 0.005)]
        e0: f64,
        #[arg(long = "T", default_value_t = 50.0)]
        t_final: f64,
        #[arg(long, default_value_t = 256)]
        ring: usize,
        #[arg(long, default_value_t = 32)]
        nc: usize,
        #[arg(long, default_value_t = 0.25)]
        ds: f64,
        #[arg(long = "M", default_value_t = 2.0)]
        m: f64,
        #[arg(long = "K", default_value_t = 16)]
        k: usize,
        #[arg(long, default_value = "modulation-out")]
        out_dir: PathBuf,
    },
    /// Randomized checks of the convolution inequalities.
    Inequalities {
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_complex(s: &str) -> Result<C64> {
    let bad = || Error::param("lambda", format!("expected `re,im`, got `{s}`"));
    let (re, im) = s.split_once(',').ok_or_else(bad)?;
    Ok(c(re.trim().parse().map_err(|_| bad())?, im.trim().parse().map_err(|_| bad())?))
}

fn parse_axis(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::param("grid", format!("expected `lo:hi:n`, got `{s}`"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if n == 0 {
        return Err(bad());
    }
    Ok(run::linspace(lo, hi, n))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => run::write_file(p, text),
        None => {
            use std::io::Write;
            // A closed pipe (e.g. `| head`) is not an error.
            match std::io::stdout().lock().write_all(text.as_bytes()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    Err(Error::Io { path: "<stdout>".into(), source: e })
                }
                _ => Ok(()),
            }
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.display().to_string(), source: e })
}

fn field_csv(f: &GreenField) -> String {
    to_csv(&run::GREEN_HEADER, &run::green_rows(f))
}

fn profile_cmd(cmd: ProfileCmd) -> Result<()> {
    match cmd {
        ProfileCmd::MakeConstant { n, a, c0, grid, out } => {
            let m = DMatrix::from_diagonal_element(n, n, c0);
            profile::make_constant_profile(n, a, &m, grid)?.save(&out)
        }
        ProfileCmd::MakeManufactured { amp, a, grid, out } => profile::manufactured_sine(amp, a, grid)?.save(&out),
        ProfileCmd::Validate { file } => {
            let p = WaveProfile::load(&file)?;
            println!("n={} a={} Nx={} constant={}", p.dim(), fmt(p.speed()), p.grid_size(), p.is_constant());
            println!("fourier_tail_beyond_16={}", fmt(p.fourier_tail_beyond(16)));
            Ok(())
        }
    }
}

fn evans_cmd(cmd: EvansCmd) -> Result<()> {
    match cmd {
        EvansCmd::Eval { fx, lambda, xi, tol } => {
            let p = fx.build()?;
            let d = floquet::evans(&p, parse_complex(&lambda)?, xi, tol)?;
            println!("{} {}", fmt(d.re), fmt(d.im));
            Ok(())
        }
        EvansCmd::Scan { fx, grid, xi, tol, out } => {
            let p = fx.build()?;
            let (re_s, im_s) = grid.split_once(',').ok_or_else(|| Error::param("grid", "expected two axes"))?;
            let (res, ims) = (parse_axis(re_s)?, parse_axis(im_s)?);
            let mut rows = Vec::new();
            for &re in &res {
                for &im in &ims {
                    let d = floquet::evans(&p, c(re, im), xi, tol)?;
                    rows.push(vec![xi, re, im, d.re, d.im]);
                }
            }
            emit(&out, &to_csv(&["xi", "re_lambda", "im_lambda", "re_D", "im_D"], &rows))
        }
    }
}

fn spectrum_cmd(cmd: SpectrumCmd) -> Result<()> {
    match cmd {
        SpectrumCmd::Scan { fx, k, xi_samples, out } => {
            let p = fx.build()?;
            let mut rows = Vec::new();
            for i in 0..xi_samples {
                let xi = -PI + 2.0 * PI * i as f64 / xi_samples as f64;
                for z in bloch::spectrum(&p, xi, k)?.values {
                    rows.push(vec![xi, z.re, z.im]);
                }
            }
            emit(&out, &to_csv(&["xi", "re_lambda", "im_lambda"], &rows))
        }
        SpectrumCmd::Branch { fx, k, xi_max, n_xi, out } => {
            let p = fx.build()?;
            let br = bloch::critical_branch(&p, k, xi_max, n_xi)?;
            let rows: Vec<Vec<f64>> =
                br.xi_grid.iter().zip(&br.lambda_values).map(|(&xi, l)| vec![xi, l.re, l.im]).collect();
            emit(&out, &to_csv(&["xi", "re_lambda", "im_lambda"], &rows))
        }
        SpectrumCmd::StabilityReport { fx, k, xi_samples, out } => {
            let p = fx.build()?;
            let stab = bloch::check_diffusive_stability(&p, k, xi_samples)?;
            let br = bloch::critical_branch(&p, k, 0.1 * PI, 21)?;
            emit(&out, &to_json(&run::stability_json(&stab, &br)))
        }
    }
}

fn resolvent_cmd(cmd: ResolventCmd) -> Result<()> {
    match cmd {
        ResolventCmd::Kernel { fx, lambda, xi, kind, points, tol, out } => {
            let p = fx.build()?;
            let sys = floquet::FloquetSystem::new(&p, xi, parse_complex(&lambda)?);
            let grid = resolvent::unit_grid(points);
            let f = match kind {
                KernelKind::Whole => resolvent::whole_line_kernel(&sys, &grid, &grid, tol)?,
                KernelKind::Periodic => resolvent::periodic_kernel(&sys, &grid, &grid, tol)?,
            };
            let mut rows = Vec::new();
            for (iy, &y) in grid.iter().enumerate() {
                for (ix, &x) in grid.iter().enumerate() {
                    let (g, dg) = (f.g(ix, iy)[(0, 0)], f.dg(ix, iy)[(0, 0)]);
                    rows.push(vec![x, y, g.re, g.im, dg.re, dg.im]);
                }
            }
            emit(&out, &to_csv(&run::KERNEL_HEADER, &rows))
        }
        ResolventCmd::ImagesCheck { fx, j, lambda, xi, tol, out } => {
            let p = fx.build()?;
            let sys = floquet::FloquetSystem::new(&p, xi, parse_complex(&lambda)?);
            let grid = resolvent::unit_grid(8);
            let rep = resolvent::method_of_images_check(&sys, j, &grid, &grid, tol)?;
            let ratio = run::images_ratio(&rep.deviations);
            let v = serde_json::json!({ "report": rep, "measured_ratio": ratio, "expected_ratio": (-rep.decay_rate).exp() });
            emit(&out, &to_json(&v))
        }
        ResolventCmd::HfScan { fx, xi, rays, from, to, count, tol, out } => {
            let p = fx.build()?;
            let angles: Vec<f64> = rays
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| Error::param("rays", format!("bad angle `{s}`"))))
                .collect::<Result<_>>()?;
            let mags: Vec<f64> = run::linspace(from.log10(), to.log10(), count).iter().map(|e| 10f64.powf(*e)).collect();
            let pairs: Vec<(f64, f64)> =
                resolvent::unit_grid(8).iter().flat_map(|&x| [0.0, 0.5].map(|y| (x, y))).collect();
            let mut reports = Vec::new();
            for &th in &angles {
                let lams: Vec<C64> = mags.iter().map(|&r| C64::from_polar(r, th)).collect();
                reports.push(resolvent::high_frequency_modulus_check(&p, xi, &lams, &pairs, tol)?);
            }
            emit(&out, &to_json(&reports))
        }
    }
}

fn green_cmd(cmd: GreenCmd) -> Result<()> {
    match cmd {
        GreenCmd::Synth { fx, t, route, grid, dt, nodes, out } => {
            let p = fx.build()?;
            let bp = BlochParams { k: grid.k, n_xi: grid.n_xi, nc: grid.nc, ny: grid.ny };
            match route {
                RouteArg::Bloch => emit(&out, &field_csv(&green::green_bloch(&p, t, bp)?)),
                RouteArg::Direct => {
                    let dp = DirectParams { ring: grid.n_xi, nc: grid.nc, dt, sigma: 1.0 / 64.0, ny: grid.ny };
                    let f = green::green_direct(&p, &[t], dp)?;
                    emit(&out, &field_csv(&f[0]))
                }
                RouteArg::Laplace => {
                    let ys = resolvent::unit_grid(grid.ny);
                    let xs = run::linspace(-3.0, 3.0, 6 * grid.nc / grid.ny.max(1) + 1);
                    let pairs: Vec<(f64, f64)> = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
                    let params = ContourParams { nodes, ..Default::default() };
                    let g = green::green_laplace(&p, t, &pairs, params)?;
                    let rows: Vec<Vec<f64>> =
                        pairs.iter().zip(&g).map(|(&(x, y), m)| vec![x, y, m[(0, 0)].re, m[(0, 0)].im]).collect();
                    emit(&out, &to_csv(&run::GREEN_HEADER, &rows))
                }
            }
        }
        GreenCmd::Split { fx, times, grid, report } => {
            let p = fx.build()?;
            let bp = BlochParams { k: grid.k, n_xi: grid.n_xi, nc: grid.nc, ny: grid.ny };
            let fields = green::green_bloch_multi(&p, &times, bp, Kernel::G)?;
            let br = bloch::critical_branch(&p, grid.k, 0.1 * PI, 21)?;
            let split = green::leading_split(&fields, &br)?;
            emit(&report, &to_json(&run::split_json(&split)))
        }
    }
}

fn simulate_cmd(cmd: SimulateCmd) -> Result<()> {
    match cmd {
        SimulateCmd::HeatQ { q, class, e0, t_final, r, m, dt, seed, out_dir } => {
            let data_class = match class {
                1 => heat::DataClass::Weighted,
                2 => heat::DataClass::Gaussian { m },
                3 => heat::DataClass::Algebraic { r },
                _ => return Err(Error::param("class", "must be 1, 2 or 3")),
            };
            let grid = heat::Grid::for_run(t_final, 1.0);
            let u0 = heat::InitialData::new(data_class, e0, grid)?;
            let opts = heat::DecayOptions { dt, seed, ..Default::default() };
            let rep = heat::decay_report_heat(&u0, q, t_final, &[1.0, 2.0, f64::INFINITY], opts)?;
            create_dir(&out_dir)?;
            let (header, rows) = run::heat_rows(&rep);
            run::write_file(&out_dir.join("timeseries.csv"), &to_csv(&header, &rows))?;
            run::write_file(&out_dir.join("report.json"), &to_json(&rep))?;
            for (k, s) in &rep.slopes {
                println!("slope p={k}: {} ± {}", fmt(s.value), fmt(s.ci));
            }
            println!("U_star={}", fmt(rep.u_star));
            Ok(())
        }
        SimulateCmd::Modulation { fx, e0, t_final, ring, nc, ds, m, k, out_dir } => {
            let p = fx.build()?;
            let br = bloch::critical_branch(&p, k, 0.1 * PI, 21)?;
            let params = modulation::ModulationParams::new(ring, nc, ds, t_final);
            let v0 = heat::InitialData::new(heat::DataClass::Gaussian { m }, e0, params.grid())?;
            let (_, rep) = modulation::modulation_pipeline(&p, &br, &v0.samples, &params)?;
            create_dir(&out_dir)?;
            let rows: Vec<Vec<f64>> = (0..rep.times.len())
                .map(|i| vec![rep.times[i], rep.v_sup[i], rep.v_sup_weighted[i], rep.psi_sup[i]])
                .collect();
            run::write_file(&out_dir.join("timeseries.csv"), &to_csv(&["t", "v_sup", "v_sup_weighted", "psi_sup"], &rows))?;
            run::write_file(&out_dir.join("report.json"), &to_json(&rep))?;
            println!("converged={} max_contraction_ratio={}", rep.converged, fmt(rep.max_contraction_ratio));
            Ok(())
        }
        SimulateCmd::Inequalities { samples, seed, out } => {
            let reps = inequalities::inequality_suite(samples, seed)?;
            emit(&out, &to_json(&reps))
        }
    }
}

fn report_cmd(dir: &Path) -> Result<bool> {
    let problems = run::verify_manifest(dir)?;
    for p in &problems {
        println!("MANIFEST {p}");
    }
    let path = dir.join(run::SUMMARY_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
    let summary: run::Summary =
        serde_json::from_str(&text).map_err(|e| Error::Parse { line: e.line(), msg: e.to_string() })?;
    for ch in &summary.checks {
        let tag = if ch.pass { "PASS" } else { "FAIL" };
        println!("{tag} {}/{} value={} bound={}", ch.module, ch.name, fmt(ch.value), fmt(ch.bound));
    }
    Ok(problems.is_empty() && summary.all_pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res: Result<bool> = match cli.cmd {
        Cmd::Profile(c) => profile_cmd(c).map(|_| true),
        Cmd::Evans(c) => evans_cmd(c).map(|_| true),
        Cmd::Spectrum(c) => spectrum_cmd(c).map(|_| true),
        Cmd::Resolvent(c) => resolvent_cmd(c).map(|_| true),
        Cmd::Green(c) => green_cmd(c).map(|_| true),
        Cmd::Simulate(c) => simulate_cmd(c).map(|_| true),
        Cmd::Report { dir } => report_cmd(&dir),
        Cmd::Run { config } => ExperimentConfig::load(&config).and_then(|cfg| run::run(&cfg)).map(|o| {
            for ch in &o.summary.checks {
                let tag = if ch.pass { "PASS" } else { "FAIL" };
                println!("{tag} {}/{}", ch.module, ch.name);
            }
            println!("wrote {} files to {}", o.manifest.len() + 1, o.output.display());
            o.summary.all_pass
        }),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(2)
        }
    }
}
