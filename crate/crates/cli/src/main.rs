//! rfidlab: train desk-scale models, compute IS/FID (and their robust
//! variants), attack them, and reproduce the study tables.

mod commands;
mod config;
mod errors;
mod sources;

use clap::{Parser, Subcommand};
use errors::CliResult;

#[derive(Parser)]
#[command(
    name = "rfidlab",
    version,
    about = "Laboratory for probing the robustness of GAN quality measures (IS, FID, R-FID)",
    after_help = "Exit codes: 0 success, 2 usage, 3 config, 4 runtime.\n\
                  RFIDLAB_THREADS caps the worker count."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the nominal embedder, a robust embedder, or the toy generator
    Train(commands::train::TrainArgs),
    /// Compute FID or IS between image sources
    Metric(commands::metric::MetricArgs),
    /// Run an attack sweep and emit before/after metrics
    Attack(commands::attack::AttackArgs),
    /// Truncation ablation: per-α FID, all (α_i, α_j) pairs, real-vs-real baseline
    TruncationStudy(commands::studies::TruncationArgs),
    /// FID under Gaussian noise and blur severity sweeps
    DegradationStudy(commands::studies::DegradationArgs),
    /// Merge sweep reports into a human-readable summary
    Report(commands::report::ReportArgs),
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Train(args) => commands::train::run(args),
        Command::Metric(args) => commands::metric::run(args),
        Command::Attack(args) => commands::attack::run(args),
        Command::TruncationStudy(args) => commands::studies::run_truncation(args),
        Command::DegradationStudy(args) => commands::studies::run_degradation(args),
        Command::Report(args) => commands::report::run(args),
    }
}

fn main() {
    if let Ok(threads) = std::env::var("RFIDLAB_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n >= 1 => rfidlab_core::parallel::set_threads(n),
            _ => {
                eprintln!("config error: RFIDLAB_THREADS must be a positive integer");
                std::process::exit(3);
            }
        }
    }
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
