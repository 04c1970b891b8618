//! `heatcast` — hourly district-heating load forecasting from the command
//! line.
//!
//! A single TOML configuration document drives every subcommand; flags
//! override individual keys. Exit codes: 0 success, 2 configuration error,
//! 3 data error, 4 numeric failure.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "heatcast",
    version,
    about = "Hourly heat-load forecasting: simulate, train, predict, evaluate, aggregate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic consumer data (load, temperature, ground truth).
    Simulate(SimulateArgs),
    /// Fit a model on the training span and write a state file.
    Train(TrainArgs),
    /// Issue forecasts from a trained state file.
    Predict(PredictArgs),
    /// Walk-forward evaluation: train before the split, forecast across it.
    Evaluate(EvaluateArgs),
    /// Sum simultaneous forecasts across trained consumers.
    Aggregate(AggregateArgs),
    /// Print a JSON summary of a state file.
    InspectState(InspectStateArgs),
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Configuration document (needs a [simulate] section).
    #[arg(short, long)]
    config: PathBuf,
    /// Overrides [output].directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Overrides [simulate].seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides [simulate].hours.
    #[arg(long)]
    hours: Option<usize>,
    /// Overrides [portfolio].n_consumers.
    #[arg(long)]
    consumers: Option<usize>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Configuration document (needs [data]; honours [evaluation].split).
    #[arg(short, long)]
    config: PathBuf,
    /// Train only on hours before this timestamp (overrides
    /// [evaluation].split).
    #[arg(long)]
    split: Option<String>,
    /// State file to write (default: <output dir>/<consumer>.state.json).
    #[arg(long)]
    state_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct PredictArgs {
    /// Configuration document (needs [data]).
    #[arg(short, long)]
    config: PathBuf,
    /// Trained state file.
    #[arg(long)]
    state: PathBuf,
    /// Issue time (default: last hour with an observed load).
    #[arg(long)]
    issue: Option<String>,
    /// Forecast lead time in hours (overrides [evaluation].horizon).
    #[arg(long)]
    horizon: Option<usize>,
    /// Write the forecast CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Configuration document (needs [data] and an evaluation split).
    #[arg(short, long)]
    config: PathBuf,
    /// Take the feature/estimator recipe from this state file instead of
    /// the config sections.
    #[arg(long)]
    state: Option<PathBuf>,
    /// Overrides [evaluation].split.
    #[arg(long)]
    split: Option<String>,
    /// Overrides [evaluation].horizon.
    #[arg(long)]
    horizon: Option<usize>,
    /// Clamp point predictions at zero.
    #[arg(long)]
    clamp: bool,
    /// Also write the report JSON here (it always goes to stdout).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Forecast records CSV (default: <output dir>/<consumer>_forecasts.csv).
    #[arg(long)]
    forecasts: Option<PathBuf>,
}

#[derive(Args)]
pub struct AggregateArgs {
    /// Configuration document (needs an [aggregate] section).
    #[arg(short, long)]
    config: PathBuf,
    /// Shared issue time for every consumer.
    #[arg(long)]
    issue: String,
    /// Forecast lead time in hours (overrides [evaluation].horizon).
    #[arg(long)]
    horizon: Option<usize>,
    /// Write the portfolio CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct InspectStateArgs {
    /// State file to summarize.
    state: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => commands::cmd_simulate(args),
        Command::Train(args) => commands::cmd_train(args),
        Command::Predict(args) => commands::cmd_predict(args),
        Command::Evaluate(args) => commands::cmd_evaluate(args),
        Command::Aggregate(args) => commands::cmd_aggregate(args),
        Command::InspectState(args) => commands::cmd_inspect_state(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
