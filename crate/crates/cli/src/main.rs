//! `expfam`: sample, fit, recover and sweep polynomial exponential families.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "expfam", version, about = "Score-matching structure learning for polynomial exponential families")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw Gibbs samples from a model and write them as CSV.
    Sample(SampleArgs),
    /// Fit every local neighborhood by constrained score matching.
    Fit(FitArgs),
    /// Learn the structure with the clique-pruning algorithm.
    Recover(RecoverArgs),
    /// Check the curvature lower bound for one vertex and clique.
    Curvature(CurvatureArgs),
    /// Run an experiment sweep and write the CSV and report.
    Sweep(SweepArgs),
    /// Rebuild a report from an existing sweep CSV.
    Report(ReportArgs),
}

/// Seed handling shared by the randomised subcommands.
#[derive(Debug, Args)]
struct SeedArgs {
    /// Master seed. Overrides `EXPFAM_SEED` and any seed in a config file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    /// Model JSON (family, theta, B, tail).
    #[arg(long)]
    model: PathBuf,
    /// Number of samples.
    #[arg(short = 'm', long = "samples")]
    samples: usize,
    /// Output CSV; a `.json` provenance sidecar is written next to it.
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    burn_in: usize,
    #[arg(long, default_value_t = 1)]
    thinning: usize,
    #[arg(long, default_value_t = 1024)]
    grid_points: usize,
    /// Sample the model restricted to `[-c, c]^n`.
    #[arg(long)]
    truncate: Option<f64>,
    #[command(flatten)]
    seed: SeedArgs,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Model or family JSON; only the family is used.
    #[arg(long)]
    model: PathBuf,
    /// Sample CSV.
    #[arg(long)]
    samples: PathBuf,
    /// Fit only this vertex (0-based).
    #[arg(long)]
    vertex: Option<usize>,
    /// Group bound B; defaults to the model's B, or 1.
    #[arg(long)]
    bound: Option<f64>,
    /// Absolute solver tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Report errors against the model's theta.
    #[arg(long)]
    truth: bool,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RuleArg {
    Absolute,
    Signed,
}

#[derive(Debug, Args)]
struct RecoverArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    samples: PathBuf,
    #[arg(long, default_value_t = 0.04)]
    eps: f64,
    /// Pruning threshold; defaults to sqrt(eps).
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, value_enum, default_value_t = RuleArg::Absolute)]
    rule: RuleArg,
    #[arg(long)]
    bound: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Compare against the model's theta and structure.
    #[arg(long)]
    truth: bool,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CurvatureArgs {
    #[arg(long)]
    model: PathBuf,
    /// Samples from the model; rows outside `[-C_t, C_t]^n` are dropped.
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    vertex: usize,
    /// Comma-separated clique containing the vertex, e.g. `0,1`.
    #[arg(long, value_delimiter = ',')]
    clique: Vec<usize>,
    /// Number of random Δ directions to check.
    #[arg(long, default_value_t = 10)]
    deltas: usize,
    #[arg(long, default_value_t = 32)]
    max_boxes: usize,
    /// Drop the base-measure term from the conditional density.
    #[arg(long)]
    no_base_term: bool,
    /// Exit with status 3 when any direction violates the bound.
    #[arg(long)]
    check: bool,
    #[command(flatten)]
    seed: SeedArgs,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Experiment config JSON.
    #[arg(long)]
    config: PathBuf,
    /// CSV output; defaults to the config's `output.csv`.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Report output; defaults to the config's `output.report`.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Record wall-clock time per cell.
    #[arg(long)]
    timing: bool,
    /// Exit with status 3 when a configured check fails.
    #[arg(long)]
    check: bool,
    #[command(flatten)]
    seed: SeedArgs,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    csv: PathBuf,
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    check: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sample(a) => commands::sample(a),
        Command::Fit(a) => commands::fit(a),
        Command::Recover(a) => commands::recover(a),
        Command::Curvature(a) => commands::curvature(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("expfam: {e}");
            e.exit_code()
        }
    }
}

/// Resolves the master seed: flag, then `EXPFAM_SEED`, then `fallback`.
fn resolve_seed(args: &SeedArgs, fallback: u64) -> Result<u64, CliError> {
    if let Some(s) = args.seed {
        return Ok(s);
    }
    match std::env::var("EXPFAM_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("EXPFAM_SEED={v:?} is not an unsigned integer"))),
        Err(_) => Ok(fallback),
    }
}
