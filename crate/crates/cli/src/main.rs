//! `adasharp` command-line front end.

mod commands;
mod failure;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use failure::Failure;

#[derive(Parser, Debug)]
#[command(name = "adasharp", version, about = "Adaptive sharpness experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON configuration file (defaults are used for omitted fields where
    /// the subcommand allows it)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Overrides the seed of the configuration
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Worker threads; 1 runs everything on the calling thread
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// Log progress to standard error (repeat for more detail)
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sharpness of one checkpoint on one dataset.
    ///
    /// Config: {"checkpoint": PATH, "data": PATH, "measures": [SHARPNESS...],
    /// "model_id": STR?, "seed": N?}. Relative paths are resolved against the
    /// config file. Writes report.json and sharpness.csv with columns
    /// model_id, measure_name, rho, value.
    Measure,
    /// Train a pool of diagonal linear networks on sparse regression.
    ///
    /// Config: see the README; every field has a default. Writes models.csv
    /// with columns model, seed, lr, init_scale, steps, train_loss, passed,
    /// test_loss, l1_norm, half_trace_rescaled, half_trace,
    /// half_lambda_max_rescaled and summary.json with the Kendall τ values.
    Diaglin,
    /// Reparametrization checks and the logit-scale sweep.
    ///
    /// Writes invariance.csv (check, alpha, reference, value, rel_change,
    /// passed) and scale_sweep.csv (alpha, train_loss, adaptive,
    /// adaptive_normalized). Exits with 4 when a check fails.
    Invariance,
    /// Train, measure and correlate a pool of classifiers (resumable).
    ///
    /// Writes manifest.json, checkpoints/, tau.csv (measure, rho, target,
    /// subgroup, n, tau) and scatter.csv (model_id, measure, rho, target,
    /// measure_value, target_value, subgroup).
    Pool,
    /// Write a synthetic dataset to CSV.
    ///
    /// Config: {"kind": "sparse_regression", ...task fields, "seed": N} or
    /// {"kind": "gaussian_mixture", "n_classes", "dim", "separation", "seed",
    /// "n_train", "n_test"}. Writes train.csv and test.csv (last column
    /// `target` or `label`), plus beta_star.csv for sparse regression.
    GenTask,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let ctx = commands::Context {
        config: cli.config.clone(),
        out: cli.out.clone(),
        seed: cli.seed,
    };
    match cli.command {
        Command::Measure => commands::measure::run(&ctx),
        Command::Diaglin => commands::diaglin::run(&ctx),
        Command::Invariance => commands::invariance::run(&ctx),
        Command::Pool => commands::pool::run(&ctx),
        Command::GenTask => commands::gen_task::run(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    let result = match cli.jobs {
        Some(0) => Err(Failure::Config("--jobs must be at least 1".into())),
        Some(1) => adasharp::exec::with_policy(adasharp::exec::Execution::Sequential, || run(&cli)),
        Some(n) => with_threads(n, || run(&cli)),
        None => run(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("adasharp: {f}");
            ExitCode::from(f.code())
        }
    }
}

#[cfg(feature = "parallel")]
fn with_threads(n: usize, f: impl FnOnce() -> Result<(), Failure> + Send) -> Result<(), Failure> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))?;
    pool.install(f)
}

#[cfg(not(feature = "parallel"))]
fn with_threads(_n: usize, f: impl FnOnce() -> Result<(), Failure> + Send) -> Result<(), Failure> {
    log::warn!("built without the parallel feature; --jobs is ignored");
    f()
}
