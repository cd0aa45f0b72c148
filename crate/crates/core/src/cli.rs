//! Command-line front end. `run` returns the process exit code: 0 on
//! success, 1 on a numerical or domain error, 2 on a usage error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::acceptance;
use crate::domain_green::{regular_part_bound_check, DomainModel};
use crate::energy_constants::compute_constants;
use crate::error::LabError;
use crate::exponents::{ExponentPair, Regime};
use crate::ground_state::{extract_tail_constants, solve_ground_state, RadialProfile, ShootingConfig};
use crate::linearization::{kernel_basis, linearized_residual, probe_mode, DEFAULT_DECAY_THRESHOLD};
use crate::projection::{
    default_targets, external_norm_scaling, log_space, project_bubble, projection_deficit_monte_carlo, remainder_sweep,
    write_sweep_csv, BubblePlacement,
};
use crate::reduced_energy::reduce_domain;

/// Caps the worker count of parallel sweeps.
pub const THREADS_ENV: &str = "BUBBLE_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "bubble-lab", version, about = "Boundary-layer bubbles of critical Lane-Emden systems")]
struct Cli {
    /// Seed for Monte-Carlo cross-checks; recorded in every output.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for CSV and JSON artifacts.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
struct PairArgs {
    /// Dimension.
    #[arg(long)]
    n: u32,
    /// Smaller exponent, decimal or rational (`7/3`); the partner is derived.
    #[arg(long)]
    p0: String,
    /// Outer radius of the shooting integration.
    #[arg(long)]
    r_max: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RegimeArg {
    Slow,
    Fast,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Radial ground state: profile CSV plus JSON sidecar.
    GroundState(PairArgs),
    /// Far-field constants and fitted decay exponents (JSON on stdout).
    Tail(PairArgs),
    /// Kernel residuals and angular-mode kernel dimensions (JSON on stdout).
    KernelCheck {
        #[command(flatten)]
        pair: PairArgs,
        /// Highest angular mode probed.
        #[arg(long, default_value_t = 2)]
        max_mode: u32,
    },
    /// Energy constants A1..B3 (JSON on stdout).
    Constants(PairArgs),
    /// Green's function checks on a ball (JSON on stdout).
    GreenCheck {
        #[arg(long)]
        n: u32,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        /// Random pairs for the symmetry and boundary checks.
        #[arg(long, default_value_t = 100)]
        samples: usize,
        /// Dyadic levels of the boundary-distance refinement.
        #[arg(long, default_value_t = 4)]
        levels: usize,
    },
    /// Projected bubble at default targets in the unit ball (CSV plus sidecar).
    Project {
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 1e-7)]
        rel_tol: f64,
        /// Monte-Carlo samples for a cross-check at the bubble centre (0 skips it).
        #[arg(long, default_value_t = 0)]
        monte_carlo: usize,
    },
    /// Exterior-norm scaling against δ/η and the remainder sweep (CSV plus sidecar).
    ResidualSweep {
        #[arg(long, value_enum)]
        regime: RegimeArg,
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long, default_value_t = 1e-3)]
        ratio_min: f64,
        #[arg(long, default_value_t = 1e-1)]
        ratio_max: f64,
        #[arg(long, default_value_t = 17)]
        points: usize,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
    },
    /// Reduced-energy configuration for a domain file (JSON on stdout and in out-dir).
    Reduce {
        /// Domain JSON: {"shape", "center", "radii", "n", "weight_exponents"}.
        #[arg(long)]
        domain: PathBuf,
        #[arg(long)]
        kappa: usize,
        #[arg(long)]
        epsilon: f64,
        /// Defaults to the symmetric exponent (n+2)/(n-2).
        #[arg(long)]
        p0: Option<String>,
        /// Constant of the displayed margin band.
        #[arg(long, default_value_t = 1.0)]
        margin: f64,
    },
    /// Runs the acceptance checks and prints one line per criterion.
    Report {
        /// Subset of criteria, e.g. `--only 1,9`.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

enum Failure {
    Usage(String),
    Domain(LabError),
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        Failure::Domain(e)
    }
}

type Outcome = std::result::Result<i32, Failure>;

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Usage(format!("{}: {e}", path.display()))
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    configure_threads();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            2
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn configure_threads() {
    let Ok(raw) = std::env::var(THREADS_ENV) else { return };
    match raw.trim().parse::<usize>() {
        Ok(k) if k > 0 => {
            // a second call in the same process keeps the first pool
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
        }
        _ => log::warn!("ignoring {THREADS_ENV}={raw:?}: expected a positive integer"),
    }
}

fn dispatch(cli: &Cli) -> Outcome {
    let writes = matches!(
        cli.command,
        Command::GroundState(_) | Command::Project { .. } | Command::ResidualSweep { .. } | Command::Reduce { .. }
    );
    if writes {
        ensure_out_dir(cli)?;
    }
    match &cli.command {
        Command::GroundState(p) => ground_state(cli, p),
        Command::Tail(p) => tail(cli, p),
        Command::KernelCheck { pair, max_mode } => kernel_check(cli, pair, *max_mode),
        Command::Constants(p) => constants(cli, p),
        Command::GreenCheck { n, radius, samples, levels } => green_check(cli, *n, *radius, *samples, *levels),
        Command::Project { pair, epsilon, t, lambda, rel_tol, monte_carlo } => {
            project(cli, pair, *epsilon, *t, *lambda, *rel_tol, *monte_carlo)
        }
        Command::ResidualSweep { regime, pair, ratio_min, ratio_max, points, t, lambda } => {
            residual_sweep(cli, *regime, pair, (*ratio_min, *ratio_max, *points), *t, *lambda)
        }
        Command::Reduce { domain, kappa, epsilon, p0, margin } => reduce(cli, domain, *kappa, *epsilon, p0, *margin),
        Command::Report { only } => report(only),
    }
}

fn parse_pair(args: &PairArgs) -> std::result::Result<ExponentPair, Failure> {
    ExponentPair::parse(args.n, &args.p0).map_err(|e| Failure::Usage(e.to_string()))
}

fn solve(args: &PairArgs) -> std::result::Result<RadialProfile, Failure> {
    let pair = parse_pair(args)?;
    let cfg = match args.r_max {
        Some(r) => ShootingConfig::with_r_max(r),
        None => ShootingConfig::default(),
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(solve_ground_state(&pair, &cfg)?)
}

fn ensure_out_dir(cli: &Cli) -> std::result::Result<(), Failure> {
    fs::create_dir_all(&cli.out_dir).map_err(|e| io_failure(&cli.out_dir, e))
}

/// Prints a line, tolerating a closed stdout (e.g. piped into `head`).
fn say(text: &str) {
    let _ = writeln!(std::io::stdout(), "{text}");
}

/// `base.csv`, `base.json`, ... without touching dots inside `base`.
fn artifact(base: &Path, ext: &str) -> PathBuf {
    let mut name = base.as_os_str().to_owned();
    name.push(".");
    name.push(ext);
    PathBuf::from(name)
}

fn write_file(path: &Path, bytes: &[u8]) -> std::result::Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| io_failure(path, e))?;
    say(&format!("wrote {}", path.display()));
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> std::result::Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("report values serialise");
    write_file(path, format!("{text}\n").as_bytes())
}

fn print_json(value: &impl Serialize) -> Outcome {
    say(&serde_json::to_string_pretty(value).expect("report values serialise"));
    Ok(0)
}

/// Metadata shared by every sidecar; the only place a timestamp appears.
fn sidecar_meta(cli: &Cli, command: &str) -> Value {
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    json!({
        "command": command,
        "seed": cli.seed,
        "version": env!("CARGO_PKG_VERSION"),
        "created_unix": stamp,
    })
}

fn stem(args: &PairArgs) -> String {
    format!("n{}_p{}", args.n, args.p0.replace('/', "over"))
}

fn ground_state(cli: &Cli, args: &PairArgs) -> Outcome {
    let prof = solve(args)?;
    let base = cli.out_dir.join(format!("ground_state_{}", stem(args)));
    let mut csv = Vec::new();
    prof.write_csv(&mut csv)?;
    write_file(&artifact(&base, "csv"), &csv)?;
    let sidecar = json!({
        "meta": sidecar_meta(cli, "ground-state"),
        "profile": prof.sidecar(),
        "regime": prof.pair().regime(),
        "bracket_width": prof.bracket_width(),
        "ode_residual": prof.ode_residual(),
    });
    write_json(&artifact(&base, "json"), &sidecar)?;
    Ok(0)
}

fn tail(cli: &Cli, args: &PairArgs) -> Outcome {
    let prof = solve(args)?;
    let (a, b, exponent) = extract_tail_constants(&prof);
    let pair = prof.pair();
    let (n, p0) = (pair.nf(), pair.p0());
    // b^{p0} = a((n-2)p0-2)(n-(n-2)p0) in SLOW
    let slow_identity_gap = (pair.regime() == Regime::Slow).then(|| {
        let lhs = b.powf(p0);
        (lhs - a * ((n - 2.0) * p0 - 2.0) * (n - (n - 2.0) * p0)).abs() / lhs
    });
    print_json(&json!({
        "seed": cli.seed,
        "n": pair.n(),
        "p0": pair.p0(),
        "q0": pair.q0(),
        "regime": pair.regime(),
        "a": a,
        "b": b,
        "decay_exponent": exponent,
        "tail": prof.tail(),
        "slow_identity_gap": slow_identity_gap,
    }))
}

fn kernel_check(cli: &Cli, args: &PairArgs, max_mode: u32) -> Outcome {
    let prof = solve(args)?;
    let residuals: Vec<f64> = kernel_basis(&prof).iter().map(|kp| linearized_residual(&prof, kp)).collect();
    let mut modes = Vec::new();
    for ell in 0..=max_mode {
        let probe = probe_mode(&prof, ell)?;
        let dimension = if probe.measure_full <= DEFAULT_DECAY_THRESHOLD {
            Some(1)
        } else if probe.measure_full >= 10.0 * DEFAULT_DECAY_THRESHOLD {
            Some(0)
        } else {
            None
        };
        modes.push(json!({
            "ell": ell,
            "measure_half": probe.measure_half,
            "measure_full": probe.measure_full,
            "dimension": dimension,
        }));
    }
    print_json(&json!({
        "seed": cli.seed,
        "n": args.n,
        "p0": prof.pair().p0(),
        "kernel_residuals": residuals,
        "max_residual": residuals.iter().copied().fold(0.0, f64::max),
        "modes": modes,
    }))
}

fn constants(cli: &Cli, args: &PairArgs) -> Outcome {
    let prof = solve(args)?;
    let k = compute_constants(&prof)?;
    print_json(&json!({ "seed": cli.seed, "constants": k }))
}

fn green_check(cli: &Cli, n: u32, radius: f64, samples: usize, levels: usize) -> Outcome {
    use rand::{Rng, SeedableRng};
    let domain = DomainModel::ball(vec![0.0; n as usize], radius, vec![]).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cli.seed);
    let mut inside = |scale: f64| -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if s > 1e-3 && s <= 1.0 {
                return v.iter().map(|x| scale * radius * x).collect();
            }
        }
    };
    let (mut sym, mut edge, mut harm) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..samples {
        let x = inside(0.95);
        let y = inside(0.95);
        let g = domain.green_ball(&x, &y)?;
        sym = sym.max((g - domain.green_ball(&y, &x)?).abs() / g.abs());
        let len = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let xb: Vec<f64> = x.iter().map(|v| radius * v / len).collect();
        edge = edge.max(domain.green_ball(&xb, &y)?.abs() / crate::domain_green::fundamental(n, &xb, &y));
        harm = harm
            .max(domain.regular_part_laplacian_fd(&x, &y, 1e-3 * radius)?.abs() / domain.regular_part_ball(&x, &y)?);
    }
    let bound = regular_part_bound_check(&domain, 0.2 * radius, levels, 64, cli.seed)?;
    print_json(&json!({
        "seed": cli.seed,
        "n": n,
        "radius": radius,
        "symmetry": sym,
        "boundary_vanishing": edge,
        "harmonicity": harm,
        "h_bound": bound,
    }))
}

fn unit_ball_north(n: u32) -> std::result::Result<(DomainModel, crate::domain_green::BoundaryPoint), Failure> {
    let domain = DomainModel::ball(vec![0.0; n as usize], 1.0, vec![]).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut top = vec![0.0; n as usize];
    top[n as usize - 1] = 0.5;
    let xi = domain.nearest_boundary_point(&top)?;
    Ok((domain, xi))
}

fn project(cli: &Cli, args: &PairArgs, epsilon: f64, t: f64, lambda: f64, rel_tol: f64, mc: usize) -> Outcome {
    let prof = solve(args)?;
    let (domain, xi) = unit_ball_north(args.n)?;
    let placement = BubblePlacement::new(prof.pair(), xi, t, lambda, epsilon)?;
    let targets = default_targets(&domain, &placement)?;
    let values = project_bubble(&domain, &prof, &placement, &targets, rel_tol)?;
    let base = cli.out_dir.join(format!("project_{}_eps{epsilon}", stem(args)));
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (1..=args.n).map(|i| format!("x{i}")).collect();
    header.extend(
        ["distance", "U", "V", "PU", "PV", "deficit_U", "deficit_V", "error_U", "error_V", "ordered"].map(String::from),
    );
    let csv_err = |e: csv::Error| Failure::Domain(LabError::Integration(format!("csv: {e}")));
    w.write_record(&header).map_err(csv_err)?;
    for v in &values {
        let mut row: Vec<String> = v.target.iter().map(|x| format!("{x:.17e}")).collect();
        for x in [v.distance_to_boundary, v.u, v.v, v.pu, v.pv, v.deficit_u, v.deficit_v, v.error_u, v.error_v] {
            row.push(format!("{x:.17e}"));
        }
        row.push(v.ordered().to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    let csv = w.into_inner().map_err(|e| io_failure(&base, e.into_error()))?;
    write_file(&artifact(&base, "csv"), &csv)?;
    let monte_carlo = if mc > 0 {
        Some(projection_deficit_monte_carlo(&domain, &prof, &placement, &placement.xi_eps, mc, cli.seed)?)
    } else {
        None
    };
    let sidecar = json!({
        "meta": sidecar_meta(cli, "project"),
        "placement": placement,
        "rel_tol": rel_tol,
        "all_ordered": values.iter().all(|v| v.ordered()),
        "monte_carlo_at_centre": monte_carlo,
    });
    write_json(&artifact(&base, "json"), &sidecar)?;
    Ok(0)
}

fn residual_sweep(
    cli: &Cli,
    regime: RegimeArg,
    args: &PairArgs,
    grid: (f64, f64, usize),
    t: f64,
    lambda: f64,
) -> Outcome {
    let pair = parse_pair(args)?;
    let expected = match regime {
        RegimeArg::Slow => Regime::Slow,
        RegimeArg::Fast => Regime::Fast,
    };
    if pair.regime() != expected {
        return Err(Failure::Usage(format!(
            "--regime {} does not match the pair ({}, {}), which is {}",
            expected.name(),
            args.n,
            args.p0,
            pair.regime().name()
        )));
    }
    let (lo, hi, count) = grid;
    if !(lo > 0.0 && hi > lo) || count < 3 {
        return Err(Failure::Usage("need 0 < ratio-min < ratio-max and at least 3 points".into()));
    }
    let prof = solve(args)?;
    let fit = external_norm_scaling(&prof, &log_space(lo, hi, count))?;
    let (domain, xi) = unit_ball_north(args.n)?;
    let remainders = remainder_sweep(&domain, &prof, &xi, t, lambda, &[0.1, 0.05, 0.025], 1e-6)?;
    let base = cli.out_dir.join(format!("residual_sweep_{}_{}", expected.name(), stem(args)));
    let mut csv = Vec::new();
    write_sweep_csv(&mut csv, prof.pair(), &fit, t, lambda)?;
    write_file(&artifact(&base, "csv"), &csv)?;
    let levels: Vec<Value> = remainders
        .levels
        .iter()
        .map(|l| {
            json!({ "epsilon": l.epsilon, "delta": l.delta, "eta": l.eta, "boundary": l.boundary,
                         "interior_over_boundary": l.interior_over_boundary, "ordered": l.ordered })
        })
        .collect();
    let sidecar = json!({
        "meta": sidecar_meta(cli, "residual-sweep"),
        "t": t,
        "lambda": lambda,
        "slope_u": fit.slope_u,
        "slope_v": fit.slope_v,
        "plain_slope_u": fit.plain_slope_u,
        "plain_slope_v": fit.plain_slope_v,
        "predicted_u": fit.predicted_u,
        "predicted_v": fit.predicted_v,
        "relative_gap_u": fit.relative_gap_u(),
        "relative_gap_v": fit.relative_gap_v(),
        "remainder_levels": levels,
        "remainders_bounded": remainders.bounded,
        "slow_constant_bounded": remainders.slow_constant_bounded,
    });
    write_json(&artifact(&base, "json"), &sidecar)?;
    Ok(0)
}

fn reduce(cli: &Cli, path: &Path, kappa: usize, epsilon: f64, p0: &Option<String>, margin: f64) -> Outcome {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let domain = DomainModel::from_json(&text).map_err(|e| Failure::Usage(e.to_string()))?;
    let n = domain.n();
    let pair = match p0 {
        Some(p) => ExponentPair::parse(n, p),
        None => ExponentPair::symmetric(n),
    }
    .map_err(|e| Failure::Usage(e.to_string()))?;
    if kappa == 0 || !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Failure::Usage("need kappa >= 1 and 0 < epsilon < 1".into()));
    }
    let res = reduce_domain(&domain, &pair, kappa, epsilon, margin)?;
    let mut doc = serde_json::to_value(&res).expect("configuration serialises");
    doc["seed"] = json!(cli.seed);
    doc["n"] = json!(n);
    doc["p0"] = json!(pair.p0());
    doc["q0"] = json!(pair.q0());
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("domain");
    let out = cli.out_dir.join(format!("reduce_{stem}_k{kappa}.json"));
    let text = serde_json::to_string_pretty(&doc).expect("configuration serialises");
    fs::write(&out, format!("{text}\n")).map_err(|e| io_failure(&out, e))?;
    say(&text);
    Ok(0)
}

fn report(only: &[u8]) -> Outcome {
    let ids: Vec<u8> = if only.is_empty() { (1..=10).collect() } else { only.to_vec() };
    if let Some(bad) = ids.iter().find(|&&i| !(1..=10).contains(&i)) {
        return Err(Failure::Usage(format!("no criterion {bad}; criteria are 1..=10")));
    }
    let mut all = true;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for id in ids {
        let o = acceptance::run_criterion(id);
        all &= o.passed;
        let _ = writeln!(out, "{}", o.line());
    }
    let _ = writeln!(out, "{}", if all { "all criteria passed" } else { "some criteria failed" });
    Ok(if all { 0 } else { 1 })
}
