use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use speckle_core::estimators::{project_with_residual, OptimizerConfig};
use speckle_core::lowerbound::{evaluate_instance_lower_bound, SeparatedSetSpec};
use speckle_core::model::{generate_instance, mse, sample_signal_class};
use speckle_core::{InstanceSpec, RandomStream, Role};
use speckle_harness::config::{parse_config, EstimatorKind, DEFAULT_NET_LEVELS};
use speckle_harness::io::{read_vector, InstanceFile};
use speckle_harness::sweep::{execute_sweep, Cell, TrialSetup};
use speckle_harness::verify::run_verify_suite;
use speckle_harness::{compare_varying_unvarying, HarnessError, Result};

#[derive(Parser)]
#[command(name = "speckle", version, about = "Multilook speckle model experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one instance and write it as JSON.
    Simulate(SimulateArgs),
    /// Estimate the signal of an instance file and report the MSE.
    Estimate(EstimateArgs),
    /// Run a configured Monte Carlo sweep and write CSV.
    Sweep(SweepArgs),
    /// Evaluate the Fano lower bound on one operator draw.
    Fano(FanoArgs),
    /// Run the concentration check suite and print a pass/fail table.
    Verify(VerifyArgs),
    /// Project a vector onto piecewise-constant signals with at most k pieces.
    Project(ProjectArgs),
    /// Compare varying and shared operators over the L grid of a config.
    CompareShared(CompareArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long = "looks", short = 'L')]
    looks: usize,
    #[arg(long, default_value_t = 0.1)]
    sigma_z: f64,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    x_min: f64,
    #[arg(long, default_value_t = 2.0)]
    x_max: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use one operator for every look.
    #[arg(long)]
    shared: bool,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, default_value = "mle_ascent")]
    estimator: EstimatorKind,
    /// Piece budget; defaults to the one stored in the instance file.
    #[arg(long)]
    k: Option<usize>,
    /// Level grid size for net_search. The net radius used in the rate
    /// proof (x_max / n^5) is far too fine to enumerate, so the grid is a
    /// user choice.
    #[arg(long, default_value_t = DEFAULT_NET_LEVELS)]
    net_levels: usize,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, short)]
    config: PathBuf,
    /// Overrides `output` in the config.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Overrides `workers` in the config.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct FanoArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long = "looks", short = 'L')]
    looks: usize,
    #[arg(long)]
    k: usize,
    /// Number of equal intervals carrying the two-level patterns.
    #[arg(long)]
    n_div: usize,
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    sigma_z: f64,
    #[arg(long, default_value_t = 1.0)]
    x_min: f64,
    #[arg(long, default_value_t = 2.0)]
    x_max: f64,
    /// Level gap; computed from the dimensions when absent.
    #[arg(long)]
    delta_r: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    c_delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Multiplier on every trial count.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
}

#[derive(Args)]
struct ProjectArgs {
    /// File of numbers separated by whitespace or commas.
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    x_min: f64,
    #[arg(long)]
    x_max: f64,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long, short)]
    config: PathBuf,
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let stream = RandomStream::new(a.seed, 0, 0, Role::Signal);
    let truth = sample_signal_class(&stream, a.n, a.k, a.x_min, a.x_max)?;
    let spec = InstanceSpec::new(a.m, a.n, a.looks, a.sigma_z, a.shared);
    let (inst, obs) = generate_instance(a.seed, &spec, &truth)?;
    InstanceFile::new(&inst, &obs, &truth, a.k, a.x_min, a.x_max).write(&a.output)
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let file = InstanceFile::read(&a.input)?;
    let (inst, obs, truth) = file.to_model()?;
    let mut optimizer = OptimizerConfig::default();
    optimizer.restarts = a.restarts.unwrap_or(optimizer.restarts);
    optimizer.max_iters = a.max_iters.unwrap_or(optimizer.max_iters);
    let setup = TrialSetup {
        cell: Cell {
            m: inst.m,
            n: inst.n,
            looks: inst.looks(),
            sigma_z: inst.sigma_z,
            k: a.k.unwrap_or(file.k),
        },
        seed: inst.seed,
        estimator: a.estimator,
        shared_operators: inst.shared_operators,
        x_min: file.x_min,
        x_max: file.x_max,
        net_levels: a.net_levels,
        fixed_signal: None,
        optimizer: &optimizer,
    };
    let est = setup.estimate(&inst, &obs, &truth)?;
    print_json(&json!({
        "estimator": a.estimator.id(),
        "estimate": est.values(),
        "mse": mse(&est, &truth)?,
    }))
}

fn sweep(a: SweepArgs) -> Result<()> {
    let mut cfg = parse_config(&a.config)?;
    if a.output.is_some() {
        cfg.output = a.output;
    }
    if a.workers.is_some() {
        cfg.workers = a.workers;
    }
    cfg.validate()?;
    let outcome = execute_sweep(&cfg)?;
    if outcome.all_failed() {
        return Err(HarnessError::AllCellsFailed);
    }
    Ok(())
}

fn fano(a: FanoArgs) -> Result<()> {
    let spec = match a.delta_r {
        Some(d) => SeparatedSetSpec::new(a.n, a.k, a.n_div, a.epsilon, d, a.x_min, a.x_max)?,
        None => SeparatedSetSpec::with_default_delta(
            a.n, a.k, a.n_div, a.epsilon, a.x_min, a.x_max, a.m, a.looks, a.sigma_z, a.c_delta,
        )?,
    };
    let report = evaluate_instance_lower_bound(a.seed, a.m, a.n, a.looks, a.sigma_z, &spec)?;
    print_json(&json!({
        "r": report.inputs.r,
        "alpha_r": report.inputs.alpha_r,
        "beta_r": report.inputs.beta_r,
        "delta_r": report.delta_r,
        "k_prime": spec.k_prime,
        "fano_bound": report.fano_bound,
        "mse_lower_bound": report.mse_lower_bound,
        "beta_condition": report.beta_condition,
    }))
}

fn verify(a: VerifyArgs) -> Result<bool> {
    let rows = run_verify_suite(a.seed, a.scale)?;
    for r in &rows {
        println!("[{}] {:<26} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    Ok(rows.iter().all(|r| r.passed))
}

fn project(a: ProjectArgs) -> Result<()> {
    let v = read_vector(&a.input)?;
    let (signal, residual) = project_with_residual(&v, a.k, a.x_min, a.x_max)?;
    print_json(&json!({ "projection": signal.values(), "residual": residual }))
}

fn compare(a: CompareArgs) -> Result<()> {
    let cfg = parse_config(&a.config)?;
    let report = compare_varying_unvarying(&cfg)?;
    print_json(&report)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::Estimate(a) => estimate(a).map(|_| true),
        Command::Sweep(a) => sweep(a).map(|_| true),
        Command::Fano(a) => fano(a).map(|_| true),
        Command::Verify(a) => verify(a),
        Command::Project(a) => project(a).map(|_| true),
        Command::CompareShared(a) => compare(a).map(|_| true),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
