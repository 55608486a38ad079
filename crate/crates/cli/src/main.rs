mod specs;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gaussmink::flow::{self, FlowConfig, FlowMode, FlowStatus, Scheme};
use gaussmink::gauss::{functionals, gaussian_volume_mc_support, lp_surface_density, DEFAULT_SEED};
use gaussmink::geometry::{check_uniform_convexity, derive_geometry, DEFAULT_EPS_CONVEX};
use gaussmink::io::{json_f64, write_svg, BodyDump, Polyline};
use gaussmink::logmink::{solve_log_minkowski, DiscreteMeasure, SolveOptions};
use gaussmink::sphere::SphericalGrid;
use serde::Deserialize;
use serde_json::json;

const EXIT_INVALID: u8 = 2;
const EXIT_CONVEXITY: u8 = 3;
const EXIT_MAX_STEPS: u8 = 4;
const EXIT_REJECTED: u8 = 5;

#[derive(Parser)]
#[command(name = "gaussmink", version, about = "Lp Gaussian Minkowski flows and solvers on S¹ and S²")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a normalized or unnormalized Gauss curvature flow.
    Flow(FlowArgs),
    /// Evaluate the Lp Gaussian surface density and functionals of a body.
    Measure(MeasureArgs),
    /// Solve the discrete even p = 0 problem for a measure given as JSON.
    SolveP0(SolveArgs),
}

#[derive(Args, Deserialize, Default, Clone)]
#[serde(deny_unknown_fields)]
struct GridArgs {
    /// Dimension n of the sphere Sⁿ (1 or 2).
    #[arg(long)]
    n: Option<usize>,
    /// Number of nodes on S¹.
    #[arg(long)]
    grid_n: Option<usize>,
    /// Latitude rows on S².
    #[arg(long)]
    n_lat: Option<usize>,
    /// Longitude columns on S² (defaults to twice the rows).
    #[arg(long)]
    n_lon: Option<usize>,
}

impl GridArgs {
    fn merge(self, file: GridArgs) -> GridArgs {
        GridArgs {
            n: self.n.or(file.n),
            grid_n: self.grid_n.or(file.grid_n),
            n_lat: self.n_lat.or(file.n_lat),
            n_lon: self.n_lon.or(file.n_lon),
        }
    }

    fn build(&self) -> Result<Arc<SphericalGrid>> {
        Ok(match self.n.unwrap_or(1) {
            1 => SphericalGrid::circle(self.grid_n.unwrap_or(512))?,
            2 => {
                let n_lat = self.n_lat.unwrap_or(32);
                SphericalGrid::latlon(n_lat, self.n_lon.unwrap_or(2 * n_lat))?
            }
            n => bail!("unsupported dimension n = {n}"),
        })
    }
}

#[derive(Clone, Copy, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    Normalized,
    Unnormalized,
}

#[derive(Clone, Copy, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum SchemeArg {
    Euler,
    Heun,
}

#[derive(Args, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FlowArgs {
    /// TOML file with any of these options (snake_case keys); flags win.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    grid: GridArgs,
    #[arg(long, allow_negative_numbers = true)]
    p: Option<f64>,
    /// const:C | ball-density:R | cosine:A:EPS:K | file:PATH
    #[arg(long)]
    f: Option<String>,
    /// ball:R | ellipse:A:B | ellipsoid:A:B:C | perturbed-ball:R:EPS:K[:EPS:K..] | support-file:PATH
    #[arg(long)]
    init: Option<String>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long)]
    dt_cfl: Option<f64>,
    #[arg(long)]
    dt_max: Option<f64>,
    #[arg(long)]
    eps_convex: Option<f64>,
    /// Stopping tolerance on the stationary residual.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    record_every: Option<usize>,
    #[arg(long)]
    t_max: Option<f64>,
    /// Force (true) or disable (false) antipodal symmetrization; by default
    /// it is on exactly where the theory needs symmetric data.
    #[arg(long)]
    symmetric: Option<bool>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct MeasureArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    grid: GridArgs,
    #[arg(long, allow_negative_numbers = true)]
    p: Option<f64>,
    /// Data used by the functionals; defaults to const:1.
    #[arg(long)]
    f: Option<String>,
    #[arg(long)]
    init: Option<String>,
    /// Monte Carlo samples for an independent γ estimate (0 skips it).
    #[arg(long)]
    mc_samples: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SolveArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// JSON list of {direction, mass}.
    #[arg(long)]
    measure: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Solve even when the strict subspace concentration check fails.
    #[arg(long)]
    #[serde(default)]
    no_concentration_check: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config<T: for<'de> Deserialize<'de> + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("invalid config {}", p.display()))
        }
    }
}

#[derive(Debug)]
struct NotConverged(String);

impl std::fmt::Display for NotConverged {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NotConverged {}

fn exit_code(err: &anyhow::Error) -> u8 {
    use gaussmink::Error as E;
    match err.downcast_ref::<E>() {
        Some(E::ConvexityLoss { .. }) => EXIT_CONVEXITY,
        Some(E::RejectedInput(_)) => EXIT_REJECTED,
        Some(E::SolverFailure(_)) => EXIT_MAX_STEPS,
        _ if err.downcast_ref::<NotConverged>().is_some() => EXIT_MAX_STEPS,
        _ => EXIT_INVALID,
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{}", serde_json::to_string_pretty(v)?) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn cmd_flow(args: FlowArgs) -> Result<()> {
    let file: FlowArgs = load_config(&args.config)?;
    let grid = args.grid.merge(file.grid).build()?;
    let p = args.p.or(file.p).context("--p is required")?;
    let f = specs::parse_f(&args.f.or(file.f).context("--f is required")?, &grid, p)?;
    let h0 = specs::parse_init(&args.init.or(file.init).context("--init is required")?, &grid)?;
    let mode = match args.mode.or(file.mode).unwrap_or(ModeArg::Unnormalized) {
        ModeArg::Normalized => FlowMode::Normalized,
        ModeArg::Unnormalized => FlowMode::Unnormalized,
    };
    let mut cfg = FlowConfig::new(p, f, mode);
    cfg.scheme = match args.scheme.or(file.scheme).unwrap_or(SchemeArg::Euler) {
        SchemeArg::Euler => Scheme::Euler,
        SchemeArg::Heun => Scheme::Heun,
    };
    cfg.dt_cfl = args.dt_cfl.or(file.dt_cfl).unwrap_or(cfg.dt_cfl);
    cfg.dt_max = args.dt_max.or(file.dt_max).unwrap_or(cfg.dt_max);
    cfg.eps_convex = args.eps_convex.or(file.eps_convex).unwrap_or(cfg.eps_convex);
    cfg.tol_stop = args.tol.or(file.tol).unwrap_or(cfg.tol_stop);
    cfg.max_steps = args.max_steps.or(file.max_steps).unwrap_or(cfg.max_steps);
    cfg.record_every = args.record_every.or(file.record_every).unwrap_or(cfg.record_every);
    cfg.t_max = args.t_max.or(file.t_max);
    cfg.symmetric = args.symmetric.or(file.symmetric);
    let out = args.out.or(file.out).unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out)?;

    let (state, diag) = flow::run(&h0, &cfg)?;
    flow::write_records_csv(&diag.records, create(&out, "diagnostics.csv")?)?;
    BodyDump::new(&state.h, Some(state.geometry.gauss_k())).write(create(&out, "final_body.json")?)?;
    if grid.dim() == 1 {
        let curve = |h: &gaussmink::sphere::ScalarField, color| -> Result<Polyline> {
            let g = derive_geometry(h)?;
            Ok(Polyline { points: g.boundary().iter().map(|y| [y[0], y[1]]).collect(), closed: true, color })
        };
        write_svg(create(&out, "curves.svg")?, &[curve(&h0, "gray")?, curve(&state.h, "black")?], true)?;
    } else {
        state.h.write_csv(create(&out, "final_body.csv")?)?;
    }
    let g0 = diag.records[0].functionals.gamma;
    let drift = diag.records.iter().map(|r| (r.functionals.gamma - g0).abs()).fold(0.0, f64::max);
    let status = match diag.status {
        FlowStatus::Converged => "converged",
        FlowStatus::MaxSteps => "max_steps",
        FlowStatus::TimeLimit => "time_limit",
    };
    print_json(&json!({
        "status": status,
        "steps": state.steps,
        "t": json_f64(state.t),
        "gamma_drift": json_f64(drift),
        "h_min": json_f64(state.h.min()),
        "h_max": json_f64(state.h.max()),
        "record": state.record,
    }))?;
    if diag.status == FlowStatus::MaxSteps {
        return Err(NotConverged(format!("max_steps = {} reached before convergence", cfg.max_steps)).into());
    }
    Ok(())
}

fn cmd_measure(args: MeasureArgs) -> Result<()> {
    let file: MeasureArgs = load_config(&args.config)?;
    let grid = args.grid.merge(file.grid).build()?;
    let p = args.p.or(file.p).context("--p is required")?;
    let f = specs::parse_f(&args.f.or(file.f).unwrap_or_else(|| "const:1".into()), &grid, p)?;
    let h = specs::parse_init(&args.init.or(file.init).context("--init is required")?, &grid)?;
    let samples = args.mc_samples.or(file.mc_samples).unwrap_or(0);
    let seed = args.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let out = args.out.or(file.out).unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out)?;

    let geo = derive_geometry(&h)?;
    let rep = check_uniform_convexity(&geo, DEFAULT_EPS_CONVEX);
    if !rep.uniformly_convex {
        return Err(gaussmink::Error::InvalidBody {
            node: rep.node,
            reason: format!("not uniformly convex (min principal radius {:e})", rep.min_eig),
        }
        .into());
    }
    let dens = lp_surface_density(&geo, p)?;
    dens.density.write_csv(create(&out, "measure.csv")?)?;
    let record = functionals(&geo, &f, p)?;
    let mut report = json!({
        "total_mass": json_f64(dens.total_mass()),
        "density_min": json_f64(dens.density.min()),
        "density_max": json_f64(dens.density.max()),
        "record": record,
    });
    if samples > 0 {
        let (est, se) = gaussian_volume_mc_support(&h, samples, seed);
        report["gamma_mc"] = json_f64(est);
        report["gamma_mc_std_error"] = json_f64(se);
    }
    print_json(&report)
}

fn cmd_solve_p0(args: SolveArgs) -> Result<()> {
    let file: SolveArgs = load_config(&args.config)?;
    let path = args.measure.or(file.measure).context("--measure is required")?;
    let reader = File::open(&path).with_context(|| format!("cannot open {}", path.display()))?;
    let mu = DiscreteMeasure::read_json(reader)?;
    let mut opts = SolveOptions::default();
    opts.tol = args.tol.or(file.tol).unwrap_or(opts.tol);
    opts.max_iter = args.max_iter.or(file.max_iter).unwrap_or(opts.max_iter);
    opts.require_strict_concentration = !(args.no_concentration_check || file.no_concentration_check);
    let out = args.out.or(file.out).unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out)?;
    let sol = solve_log_minkowski(&mu, &opts)?;
    let js = sol.to_json();
    serde_json::to_writer_pretty(create(&out, "solution.json")?, &js)?;
    print_json(&serde_json::to_value(&js)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Flow(a) => cmd_flow(a),
        Command::Measure(a) => cmd_measure(a),
        Command::SolveP0(a) => cmd_solve_p0(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
