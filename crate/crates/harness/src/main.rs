use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wavefilter_harness::{load_config, run_compare, run_filter, run_riccati, run_simulate, HarnessError, RunOptions};

#[derive(Parser)]
#[command(name = "wavefilter", version, about = "Stochastic wave simulation and filtering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment TOML file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Truth path and observations.
    Simulate(Common),
    /// Truth, observations and the configured filter.
    Filter(Common),
    /// Particle and Kalman filters on the same observations.
    Compare(Common),
    /// Riccati and Chandrasekhar covariance paths.
    Riccati(Common),
}

fn threads() -> Result<Option<usize>, HarnessError> {
    match std::env::var("WAVEFILTER_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => v.trim().parse::<usize>().map(Some).map_err(|_| HarnessError::Config {
            key: "WAVEFILTER_THREADS".into(),
            message: format!("expected a positive integer, got {v:?}"),
        }),
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let threads = threads()?;
    let (common, which) = match &cli.command {
        Command::Simulate(c) => (c, 0),
        Command::Filter(c) => (c, 1),
        Command::Compare(c) => (c, 2),
        Command::Riccati(c) => (c, 3),
    };
    let cfg = load_config(&common.config, common.seed)?;
    let opts = RunOptions { out: common.out.clone(), quiet: common.quiet };
    let summary = match which {
        0 => run_simulate(&cfg, &opts, threads)?,
        1 => run_filter(&cfg, &opts, threads)?,
        2 => run_compare(&cfg, &opts, threads)?,
        _ => run_riccati(&cfg, &opts)?,
    };
    if !common.quiet {
        if let Some(c) = &summary.compare {
            eprintln!("compare: all within tolerance = {}, max |gap|/tol = {:.3}", c.all_within, c.max_gap_over_tolerance);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
