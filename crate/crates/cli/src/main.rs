//! Command-line front end.
//!
//! Four subcommands: `solve` (one trajectory), `region` (stability-region
//! scan), `bench` (convergence/timing table), `orders` (fitted convergence
//! orders). Outputs are CSV plus a JSON manifest carrying the fully resolved
//! configuration; identical config + seed reproduces identical bytes (timing
//! columns are all-zero unless `--reps` asks for real measurements).

mod config;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{output_dir, resolve, resolve_opt, FileConfig, Manifest};
use rpnn::harness::{
    default_h_ladder, fit_order, run_convergence, write_results_csv, ExperimentSpec, ProblemId,
    SolverId,
};
use rpnn::stability::{scan_region, scan_region_seq, write_scan_csv, ScanConfig};
use rpnn::stepper::DEFAULT_SEED;

#[derive(Parser)]
#[command(
    name = "rpnn",
    version,
    about = "Random-projection collocation stepping for stiff ODEs"
)]
struct Cli {
    /// Flat `key = value` config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: available parallelism; 1 forces sequential).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one problem with one solver and write the trajectory CSV.
    Solve(SolveArgs),
    /// Monte-Carlo stability-region scan over the complex plane.
    Region(RegionArgs),
    /// Convergence (and optionally timing) table across solvers and steps.
    Bench(BenchArgs),
    /// Fitted convergence orders per solver.
    Orders(BenchArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Problem name: dahlquist | example1 | diffreac.
    #[arg(long)]
    problem: Option<String>,
    /// Solver name, e.g. pirpnn-m3, pirpnn-m10, backward-euler, gauss2.
    #[arg(long)]
    solver: Option<String>,
    /// Step size.
    #[arg(long)]
    h: Option<f64>,
    /// Rate for the dahlquist problem.
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
    /// Initial value for the dahlquist problem.
    #[arg(long)]
    u0: Option<f64>,
    /// End time for the dahlquist problem (other problems have fixed spans).
    #[arg(long)]
    t_end: Option<f64>,
    /// PI-RPNN ridge weight; 0 selects the pseudoinverse path.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path (default: <out-dir>/solve.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RegionArgs {
    /// Collocation points M.
    #[arg(long)]
    m: Option<usize>,
    /// Features N (default 3M).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    /// Monte-Carlo runs per mesh cell.
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Approximate mesh points per axis.
    #[arg(long)]
    points: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    re_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    re_max: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    im_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    im_max: Option<f64>,
    /// Output CSV path (default: <out-dir>/region.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Problem name: dahlquist | example1 | diffreac.
    #[arg(long)]
    problem: Option<String>,
    /// Comma-separated solver list (default: all eight).
    #[arg(long)]
    solvers: Option<String>,
    /// Comma-separated step sizes, decreasing (default: 2^-1..2^-10).
    #[arg(long)]
    h_values: Option<String>,
    /// Rate for the dahlquist problem.
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
    /// Timing repetitions; 0 keeps the output deterministic.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// PI-RPNN ridge weight; 0 selects the pseudoinverse path.
    #[arg(long)]
    delta: Option<f64>,
    /// Output CSV path (default: <out-dir>/bench.csv or orders.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Config(String),
    Numerical(String),
}

impl From<rpnn::Error> for CliError {
    fn from(e: rpnn::Error) -> CliError {
        match e {
            rpnn::Error::Config(_) | rpnn::Error::InvalidArgument(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<String> for CliError {
    fn from(s: String) -> CliError {
        CliError::Config(s)
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            2
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            1
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let threads = resolve_opt(&cli.threads, &file, "threads")?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("cannot build thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Solve(args) => cmd_solve(args, &file),
        Command::Region(args) => cmd_region(args, &file, threads),
        Command::Bench(args) => cmd_bench(args, &file, false),
        Command::Orders(args) => cmd_bench(args, &file, true),
    })
}

fn parse_problem(name: &str, lambda: f64) -> Result<ProblemId, CliError> {
    Ok(ProblemId::parse(name, lambda)?)
}

fn cmd_solve(args: &SolveArgs, file: &FileConfig) -> Result<(), CliError> {
    let problem_name = resolve(&args.problem, file, "problem", "dahlquist".to_string())?;
    let solver_name = resolve(&args.solver, file, "solver", String::new())?;
    if solver_name.is_empty() {
        return Err(CliError::Config("--solver is required".into()));
    }
    let h = resolve_opt(&args.h, file, "h")?
        .ok_or_else(|| CliError::Config("--h is required".into()))?;
    let lambda = resolve(&args.lambda, file, "lambda", -1.0)?;
    let u0 = resolve(&args.u0, file, "u0", 1.0)?;
    let t_end = resolve(&args.t_end, file, "t_end", 1.0)?;
    let delta = resolve(
        &args.delta,
        file,
        "delta",
        rpnn::harness::BENCH_DEFAULT_DELTA,
    )?;
    let seed = resolve(&args.seed, file, "seed", DEFAULT_SEED)?;
    let out =
        resolve_opt(&args.out, file, "out")?.unwrap_or_else(|| output_dir().join("solve.csv"));

    let solver = SolverId::parse(&solver_name)?;
    let mut problem_id = parse_problem(&problem_name, lambda)?;
    if let ProblemId::Dahlquist {
        u0: ref mut pu0,
        t_end: ref mut pt,
        ..
    } = problem_id
    {
        *pu0 = u0;
        *pt = t_end;
    }
    let (linear, _ref) = rpnn::harness::build_problem(&problem_id)?;
    let traj = rpnn::harness::integrate_solver(solver, &linear, h, seed, delta)?;

    let mut cfg_echo = BTreeMap::new();
    cfg_echo.insert("problem".into(), problem_name.clone());
    cfg_echo.insert("solver".into(), solver_name.clone());
    cfg_echo.insert("h".into(), h.to_string());
    cfg_echo.insert("lambda".into(), lambda.to_string());
    cfg_echo.insert("u0".into(), u0.to_string());
    cfg_echo.insert("t_end".into(), t_end.to_string());
    cfg_echo.insert("delta".into(), delta.to_string());
    cfg_echo.insert("seed".into(), seed.to_string());
    cfg_echo.insert("out".into(), out.display().to_string());
    Manifest::new("solve", cfg_echo).emit(&out)?;

    let mut body = Vec::new();
    let d = traj.dim();
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=d).map(|k| format!("u_{k}")))
        .collect();
    writeln!(body, "{}", header.join(",")).unwrap();
    for (t, state) in traj.times.iter().zip(&traj.states) {
        let mut line = t.to_string();
        for v in state.iter() {
            line.push(',');
            line.push_str(&v.to_string());
        }
        writeln!(body, "{line}").unwrap();
    }
    std::fs::write(&out, body)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", out.display())))?;
    eprintln!("wrote {} ({} rows)", out.display(), traj.times.len());
    Ok(())
}

fn cmd_region(
    args: &RegionArgs,
    file: &FileConfig,
    threads: Option<usize>,
) -> Result<(), CliError> {
    let m = resolve(&args.m, file, "m", 10usize)?;
    let mut cfg = ScanConfig::new(m);
    cfg.n_features = resolve(&args.n, file, "n", 3 * m)?;
    cfg.delta = resolve(&args.delta, file, "delta", cfg.delta)?;
    cfg.mc_runs = resolve(&args.runs, file, "runs", cfg.mc_runs)?;
    cfg.points_per_axis = resolve(&args.points, file, "points", cfg.points_per_axis)?;
    cfg.re_range.0 = resolve(&args.re_min, file, "re_min", cfg.re_range.0)?;
    cfg.re_range.1 = resolve(&args.re_max, file, "re_max", cfg.re_range.1)?;
    cfg.im_range.0 = resolve(&args.im_min, file, "im_min", cfg.im_range.0)?;
    cfg.im_range.1 = resolve(&args.im_max, file, "im_max", cfg.im_range.1)?;
    let seed = resolve(&args.seed, file, "seed", DEFAULT_SEED)?;
    let out =
        resolve_opt(&args.out, file, "out")?.unwrap_or_else(|| output_dir().join("region.csv"));

    let mut cfg_echo = BTreeMap::new();
    cfg_echo.insert("m".into(), cfg.m_colloc.to_string());
    cfg_echo.insert("n".into(), cfg.n_features.to_string());
    cfg_echo.insert("delta".into(), cfg.delta.to_string());
    cfg_echo.insert("runs".into(), cfg.mc_runs.to_string());
    cfg_echo.insert("points".into(), cfg.points_per_axis.to_string());
    cfg_echo.insert("re_min".into(), cfg.re_range.0.to_string());
    cfg_echo.insert("re_max".into(), cfg.re_range.1.to_string());
    cfg_echo.insert("im_min".into(), cfg.im_range.0.to_string());
    cfg_echo.insert("im_max".into(), cfg.im_range.1.to_string());
    cfg_echo.insert("seed".into(), seed.to_string());
    cfg_echo.insert("out".into(), out.display().to_string());
    Manifest::new("region", cfg_echo).emit(&out)?;

    let scan = if threads == Some(1) {
        scan_region_seq(&cfg, seed)?
    } else {
        scan_region(&cfg, seed)?
    };
    let mut body = Vec::new();
    write_scan_csv(&scan, &mut body).map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::write(&out, body)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", out.display())))?;
    eprintln!(
        "wrote {} ({} x {} cells, {} runs each)",
        out.display(),
        scan.re_axis.len(),
        scan.im_axis.len(),
        scan.runs_meta.mc_runs
    );
    Ok(())
}

fn parse_solver_list(raw: &str) -> Result<Vec<SolverId>, CliError> {
    raw.split(',')
        .map(|s| SolverId::parse(s.trim()).map_err(CliError::from))
        .collect()
}

fn parse_h_list(raw: &str) -> Result<Vec<f64>, CliError> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("bad h value '{s}'")))
        })
        .collect()
}

fn cmd_bench(args: &BenchArgs, file: &FileConfig, orders: bool) -> Result<(), CliError> {
    let problem_name = resolve(&args.problem, file, "problem", "example1".to_string())?;
    let lambda = resolve(&args.lambda, file, "lambda", -1.0)?;
    let mut spec = ExperimentSpec::new(parse_problem(&problem_name, lambda)?);
    if let Some(raw) = resolve_opt(&args.solvers, file, "solvers")? {
        spec.solvers = parse_solver_list(&raw)?;
    }
    if let Some(raw) = resolve_opt(&args.h_values, file, "h_values")? {
        spec.h_values = parse_h_list(&raw)?;
    } else {
        spec.h_values = default_h_ladder();
    }
    spec.timing_reps = resolve(&args.reps, file, "reps", 0usize)?;
    spec.seed = resolve(&args.seed, file, "seed", DEFAULT_SEED)?;
    spec.delta = resolve(
        &args.delta,
        file,
        "delta",
        rpnn::harness::BENCH_DEFAULT_DELTA,
    )?;
    let default_name = if orders { "orders.csv" } else { "bench.csv" };
    let out =
        resolve_opt(&args.out, file, "out")?.unwrap_or_else(|| output_dir().join(default_name));

    let mut cfg_echo = BTreeMap::new();
    cfg_echo.insert("problem".into(), problem_name.clone());
    cfg_echo.insert("lambda".into(), lambda.to_string());
    cfg_echo.insert(
        "solvers".into(),
        spec.solvers
            .iter()
            .map(|s| s.name())
            .collect::<Vec<_>>()
            .join(","),
    );
    cfg_echo.insert(
        "h_values".into(),
        spec.h_values
            .iter()
            .map(|h| h.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    cfg_echo.insert("reps".into(), spec.timing_reps.to_string());
    cfg_echo.insert("seed".into(), spec.seed.to_string());
    cfg_echo.insert("delta".into(), spec.delta.to_string());
    cfg_echo.insert("out".into(), out.display().to_string());
    Manifest::new(if orders { "orders" } else { "bench" }, cfg_echo).emit(&out)?;

    let rows = run_convergence(&spec)?;
    let mut body = Vec::new();
    if orders {
        writeln!(body, "solver,fitted_order,rows_used").unwrap();
        for solver in &spec.solvers {
            let solver_rows: Vec<_> = rows
                .iter()
                .filter(|r| r.solver == solver.name())
                .cloned()
                .collect();
            let order = fit_order(&solver_rows)?;
            writeln!(body, "{},{},{}", solver.name(), order, solver_rows.len()).unwrap();
        }
    } else {
        write_results_csv(&rows, &mut body).map_err(|e| CliError::Config(e.to_string()))?;
    }
    std::fs::write(&out, body)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", out.display())))?;
    eprintln!("wrote {} ({} result rows)", out.display(), rows.len());
    Ok(())
}
