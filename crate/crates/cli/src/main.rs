use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use drot::diagnostics::{check_prop2_bounds, kkt_report, DiagnosticsReport};
use drot::exact::solve_exact_ot;
use drot::experiments::{self, ExperimentMeta};
use drot::io::{self as files, PotentialsFile, Summary};
use drot::transfer::{self, PixelImage};
use drot::{Regularizer, SolverConfig};

const EXIT_INPUT: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_VERIFY: u8 = 3;

/// Dual-regularized optimal transport.
#[derive(Parser)]
#[command(name = "drot", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem file and write the plan, summary and potentials.
    Solve(SolveArgs),
    /// Check a plan and potentials against a problem.
    Verify(VerifyArgs),
    /// Regenerate sweep data as CSV.
    #[command(subcommand)]
    Experiment(Experiment),
    /// Recolor a source image with the palette of a target image.
    ColorTransfer(TransferArgs),
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, default_value = "quadratic")]
    phi: Regularizer,
    #[arg(long, default_value = "quadratic")]
    varphi: Regularizer,
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value_t = SolverConfig::DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = SolverConfig::DEFAULT_MAX_SWEEPS)]
    max_sweeps: usize,
    /// Added to the cost when a regularizer is entropy [default: 1e-3 with entropy].
    #[arg(long)]
    cost_shift: Option<f64>,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        let mut config = SolverConfig::new(self.gamma, self.phi, self.varphi)
            .with_tol(self.tol)
            .with_max_sweeps(self.max_sweeps);
        let default_shift = if config.uses_entropy() { transfer::DEFAULT_ENTROPY_SHIFT } else { 0.0 };
        config.cost_shift = self.cost_shift.unwrap_or(default_shift);
        config
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    problem: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    /// Plan CSV; the summary and potentials are written next to it.
    #[arg(long, default_value = "plan.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    potentials: PathBuf,
    /// Also solve the exact problem and check the approximation bounds.
    #[arg(long)]
    exact: bool,
    /// Residual tolerance; stationarity is compared against `tol·γ`.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    instances: u64,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', default_value = "quadratic,entropy,exponential")]
    regs: Vec<Regularizer>,
    #[arg(long, default_value_t = SolverConfig::DEFAULT_TOL)]
    tol: f64,
    /// CSV destination (stdout when absent); metadata goes to `<out>.meta.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Experiment {
    /// Support size against the exact plan over a γ grid.
    Sparsity(SweepArgs),
    /// Approximation errors over a γ sweep on the Gaussian pair.
    Rate {
        #[command(flatten)]
        sweep: SweepArgs,
        /// Use the squared-distance cost instead of the unit cost.
        #[arg(long)]
        sqeuclidean: bool,
    },
    /// Per-atom marginal deviations.
    Mass(SweepArgs),
    /// Wall time on the Gaussian pair.
    Timing {
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long, value_delimiter = ',', default_value = "101,501")]
        sizes: Vec<usize>,
    },
}

#[derive(Args)]
struct TransferArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long, default_value_t = 64)]
    k: usize,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = transfer::DEFAULT_SEED)]
    seed: u64,
    /// Output image (PNG or JPEG by extension); metadata goes to `<out>.json`.
    #[arg(long)]
    out: PathBuf,
}

/// Failure carrying the exit code it maps to.
struct Failure(u8, anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let e = e.into();
        let code = match e.downcast_ref::<drot::Error>() {
            Some(err) if is_solver_failure(err) => EXIT_SOLVER,
            _ => EXIT_INPUT,
        };
        Failure(code, e)
    }
}

fn is_solver_failure(err: &drot::Error) -> bool {
    match err {
        drot::Error::Projection { .. } => true,
        drot::Error::Stage { source, .. } => is_solver_failure(source),
        _ => false,
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_stem().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn solve(args: SolveArgs) -> Result<u8, Failure> {
    let problem = files::read_problem(&args.problem).with_context(|| format!("reading {}", args.problem.display()))?;
    let config = args.solver.config();
    let result = drot::solve(&problem, &config)?;
    let report = kkt_report(&problem, &config, &result);
    let summary = Summary::new(&result, &report, &config);
    write(&args.out, &files::plan_to_csv(&result.plan))?;
    write(&sibling(&args.out, ".summary.json"), &files::to_json_pretty(&summary))?;
    write(
        &sibling(&args.out, ".potentials.json"),
        &files::to_json_pretty(&PotentialsFile::new(&result.potentials, &config)),
    )?;
    println!("{}", files::to_json_pretty(&summary));
    if result.converged {
        Ok(0)
    } else {
        eprintln!(
            "error: no convergence after {} sweeps (feasibility error {:e})",
            result.sweeps, result.feasibility_error
        );
        Ok(EXIT_SOLVER)
    }
}

fn failures(report: &DiagnosticsReport, gamma: f64, primal: f64, tol: f64) -> Vec<String> {
    let checks = [
        ("kkt_stationarity_f", report.kkt_stationarity_f, tol * gamma),
        ("kkt_stationarity_g", report.kkt_stationarity_g, tol * gamma),
        ("complementary_slackness", report.complementary_slackness, tol),
        ("duality_gap", report.duality_gap, tol * (1.0 + primal.abs())),
        ("feasibility_error", report.feasibility_error, tol),
    ];
    checks
        .iter()
        .filter(|(_, value, limit)| !(value <= limit))
        .map(|(name, value, limit)| format!("{name} = {value:e} exceeds {limit:e}"))
        .collect()
}

fn verify(args: VerifyArgs) -> Result<u8, Failure> {
    let problem = files::read_problem(&args.problem).with_context(|| format!("reading {}", args.problem.display()))?;
    let plan = files::read_plan(&args.plan, problem.rows(), problem.cols())
        .with_context(|| format!("reading {}", args.plan.display()))?;
    let text = fs::read_to_string(&args.potentials).with_context(|| format!("reading {}", args.potentials.display()))?;
    let file = files::parse_potentials(&text).with_context(|| format!("reading {}", args.potentials.display()))?;
    let config = file.config.clone();
    let result = files::assemble_result(&problem, plan, file.potentials()?, &config)?;
    let report = kkt_report(&problem, &config, &result);
    let mut failed = failures(&report, config.gamma, result.primal_objective, args.tol);
    let mut output = json!({ "report": report });
    if args.exact {
        let exact = solve_exact_ot(&config.effective_problem(&problem))?;
        let bounds = check_prop2_bounds(&problem, &exact, &result, &config);
        if !bounds.passed {
            failed.push("approximation bounds violated".into());
        }
        output["exact_cost"] = json!(exact.cost);
        output["prop2"] = json!(bounds);
    }
    output["failures"] = json!(failed);
    println!("{}", serde_json::to_string_pretty(&output)?);
    for f in &failed {
        eprintln!("verification failed: {f}");
    }
    Ok(if failed.is_empty() { 0 } else { EXIT_VERIFY })
}

fn emit<R: serde::Serialize>(rows: &[R], out: &Option<PathBuf>, meta: &ExperimentMeta) -> Result<()> {
    match out {
        Some(path) => {
            let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            experiments::write_csv(rows, io::BufWriter::new(file))?;
            write(&sibling(path, ".meta.json"), &files::to_json_pretty(meta))?;
        }
        None => experiments::write_csv(rows, io::stdout().lock())?,
    }
    Ok(())
}

fn experiment(which: Experiment) -> Result<u8, Failure> {
    let decades = |k: std::ops::RangeInclusive<i32>| k.map(|e| 10f64.powi(e)).collect::<Vec<_>>();
    match which {
        Experiment::Sparsity(s) => {
            let gammas = s.gammas.clone().unwrap_or_else(|| decades(0..=4));
            let rows = experiments::sparsity(s.seed, s.instances, s.n, &gammas, &s.regs, s.tol)?;
            let meta = ExperimentMeta::new("sparsity", s.seed, s.instances as usize, s.n, &gammas, &s.regs, s.tol);
            emit(&rows, &s.out, &meta)?;
        }
        Experiment::Rate { sweep: s, sqeuclidean } => {
            let n = if s.n == 100 { 101 } else { s.n };
            let problem = if sqeuclidean {
                experiments::gaussian_benchmark(n)?
            } else {
                experiments::gaussian_unit_cost(n)?
            };
            let gammas = s.gammas.clone().unwrap_or_else(|| decades(1..=4));
            let rows = experiments::rate(&problem, &gammas, &s.regs, s.tol)?;
            let meta = ExperimentMeta::new("rate", s.seed, 1, n, &gammas, &s.regs, s.tol);
            emit(&rows, &s.out, &meta)?;
        }
        Experiment::Mass(s) => {
            let gammas = s.gammas.clone().unwrap_or_else(|| vec![100.0]);
            let rows = experiments::mass(s.seed, s.instances, s.n, &gammas, &s.regs, s.tol)?;
            let meta = ExperimentMeta::new("mass", s.seed, s.instances as usize, s.n, &gammas, &s.regs, s.tol);
            emit(&rows, &s.out, &meta)?;
        }
        Experiment::Timing { sweep: s, sizes } => {
            let gammas = s.gammas.clone().unwrap_or_else(|| vec![1000.0]);
            let rows = experiments::timing(&sizes, &gammas, &s.regs, s.tol)?;
            let size = sizes.iter().copied().max().unwrap_or(0);
            let meta = ExperimentMeta::new("timing", s.seed, sizes.len(), size, &gammas, &s.regs, s.tol);
            emit(&rows, &s.out, &meta)?;
        }
    }
    Ok(0)
}

fn color_transfer(args: TransferArgs) -> Result<u8, Failure> {
    let load = |p: &Path| PixelImage::load(p).with_context(|| format!("reading {}", p.display()));
    let source = load(&args.source)?;
    let target = load(&args.target)?;
    let config = args.solver.config();
    let out = transfer::color_transfer(&source, &target, args.k, &config, args.seed)?;
    out.image
        .save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    let meta = files::to_json_pretty(&out.metadata);
    write(&args.out.with_extension("json"), &meta)?;
    println!("{meta}");
    Ok(if out.metadata.converged { 0 } else { EXIT_SOLVER })
}

#[cfg(feature = "parallel")]
fn configure_threads() -> Result<()> {
    if let Ok(value) = std::env::var("DROT_THREADS") {
        let threads: usize = value.parse().with_context(|| format!("DROT_THREADS = {value:?}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn configure_threads() -> Result<()> {
    Ok(())
}

fn run(cli: Cli) -> Result<u8, Failure> {
    configure_threads()?;
    match cli.command {
        Command::Solve(args) => solve(args),
        Command::Verify(args) => verify(args),
        Command::Experiment(which) => experiment(which),
        Command::ColorTransfer(args) => color_transfer(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, e)) => {
            let _ = writeln!(io::stderr(), "error: {e:#}");
            ExitCode::from(code)
        }
    }
}
