//! `ccpc`: dataset generation, training, sampling, evaluation and region
//! reports for the conditional point-cloud GAN.
//!
//! Exit codes: 0 success, 2 usage or validation error, 3 numerical failure.

mod commands;
mod config;
mod error;
mod run;
mod svg;

use clap::{Parser, Subcommand};

use commands::{evaluate, gen_data, region_report, sample, train};
use config::resolve;
use error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "ccpc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    GenData(gen_data::GenDataArgs),
    Train(train::TrainArgs),
    Sample(sample::SampleArgs),
    Evaluate(evaluate::EvaluateArgs),
    RegionReport(region_report::RegionReportArgs),
}

/// `CCPC_THREADS` caps the rayon pool.
fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("CCPC_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("CCPC_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::usage(format!("thread pool: {e}")))
}

fn dispatch(command: Command) -> CliResult<()> {
    configure_threads()?;
    match command {
        Command::GenData(a) => gen_data::run(resolve(a)?),
        Command::Train(a) => train::run(resolve(a)?),
        Command::Sample(a) => sample::run(resolve(a)?),
        Command::Evaluate(a) => evaluate::run(resolve(a)?),
        Command::RegionReport(a) => region_report::run(resolve(a)?),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
