//! `cpm`: generate instances, run the threshold-constrained priority
//! mechanism, sweep thresholds, verify against oracles, and run ordering
//! experiments.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Config;

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_THRESHOLD_INFEASIBLE: u8 = 2;
pub const EXIT_PARSE: u8 = 3;
pub const EXIT_ORACLE_FAIL: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "cpm", version, about = "Threshold-constrained priority matching")]
pub struct Cli {
    /// Flat TOML file of defaults; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads for sweeps and experiments.
    #[arg(long, global = true, env = "CPM_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic instance bundle.
    Gen(GenArgs),
    /// Print the maximum achievable mean outcome of a bundle.
    Gmax(GmaxArgs),
    /// Run the mechanism once and write the matching and its trace.
    Assign(AssignArgs),
    /// Run the mechanism over a grid of thresholds.
    Sweep(SweepArgs),
    /// Run the oracle suites.
    Verify(VerifyArgs),
    /// Compare agent orderings over a grid of thresholds.
    Reorder(ReorderArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Output bundle directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub rho_p: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub rho_op: Option<f64>,
    /// Strict ranking depth; 0 keeps full rankings.
    #[arg(long)]
    pub truncation: Option<usize>,
    /// Defaults to 0.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GmaxArgs {
    pub instance: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OrderArg {
    /// `identity`, a 1-based list like `2,1,3`, `random:seed=S`,
    /// `increasing_variance`, `decreasing_variance`, or
    /// `pseudo:noise=X:seed=S:candidates=C`.
    #[arg(long)]
    pub order: Option<String>,
}

#[derive(Debug, Args)]
pub struct AssignArgs {
    pub instance: Option<PathBuf>,
    #[arg(long)]
    pub g_bar: Option<f64>,
    #[command(flatten)]
    pub order: OrderArg,
    /// Lower the threshold to the maximum when it is out of reach.
    #[arg(long)]
    pub clamp_to_gmax: bool,
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Matching CSV path (default `matching.csv`).
    #[arg(long)]
    pub matching: Option<PathBuf>,
    /// Trace path (default `trace.csv`).
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Explicit comma-separated thresholds.
    #[arg(long)]
    pub grid: Option<String>,
    /// `start:stop:step`.
    #[arg(long)]
    pub grid_range: Option<String>,
    /// Evenly spaced steps from 0 to the maximum (default 50).
    #[arg(long)]
    pub grid_steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub instance: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub order: OrderArg,
    /// Preference depth counted as a hit (default 3).
    #[arg(long)]
    pub k: Option<usize>,
    /// Output CSV (default stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Random markets in the property suites (default 100).
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long)]
    pub max_n: Option<usize>,
    #[arg(long)]
    pub max_locations: Option<usize>,
    #[arg(long)]
    pub max_capacity: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Deliberately broken mechanism: `sign-flip`, `omit-held`, or
    /// `tolerance=X`. The suites are expected to fail.
    #[arg(long)]
    pub self_test: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReorderArgs {
    pub instance: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Random orders per threshold (default 100).
    #[arg(long)]
    pub orders: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Adds a pseudo-inferred row from preferences perturbed at this scale.
    #[arg(long)]
    pub pseudo_noise: Option<f64>,
    #[arg(long)]
    pub pseudo_seed: Option<u64>,
    /// Skip the two variance-based orders.
    #[arg(long)]
    pub no_variance: bool,
    /// Output CSV (default stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<cpm_core::Error>() {
            return match e {
                cpm_core::Error::ThresholdInfeasible { .. } => EXIT_THRESHOLD_INFEASIBLE,
                cpm_core::Error::Parse { .. } => EXIT_PARSE,
                _ => EXIT_OTHER,
            };
        }
        if cause.downcast_ref::<commands::OracleFailure>().is_some() {
            return EXIT_ORACLE_FAIL;
        }
    }
    EXIT_OTHER
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = (|| {
        let cfg = match &cli.config {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        if let Some(threads) = cfg.pick(cli.threads, "threads")? {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
        }
        commands::run(&cli.command, &cfg)
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
