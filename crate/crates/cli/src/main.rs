//! `lrt`: seeded batch experiments on weakly coupled logistic maps.
//!
//! Exit status: 0 on success, 2 for configuration errors, 3 for simulation
//! errors, 4 for I/O errors.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{write_manifest, RunManifest};

#[derive(Debug, Parser)]
#[command(
    name = "lrt",
    version,
    about = "Response experiments on weakly coupled logistic maps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build or load the reduction table and emit the limit driver statistics.
    Reduce(Common),
    /// Stationary density of the macroscopic variable.
    Density(Common),
    /// Fixed-time moments over realizations, against the stochastic limit.
    Moments(Common),
    /// χ² test of the response order at each ensemble size.
    Respond(Common),
    /// Null calibration of the χ² test on synthetic data.
    Calibrate(Common),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Reduce(_) => "reduce",
            Command::Density(_) => "density",
            Command::Moments(_) => "moments",
            Command::Respond(_) => "respond",
            Command::Calibrate(_) => "calibrate",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Reduce(c)
            | Command::Density(c)
            | Command::Moments(c)
            | Command::Respond(c)
            | Command::Calibrate(c) => c,
        }
    }
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides `seed` in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `out` in the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; all available cores when absent.
    #[arg(long)]
    threads: Option<usize>,
    /// Response order ℓ; overrides the configured order.
    #[arg(long)]
    order: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lrt {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}

fn run(command: &Command) -> Result<(), CliError> {
    let start = Instant::now();
    let args = command.common();
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.out = out.clone();
    }
    if let Some(ell) = args.order {
        config.response.ell = ell;
        config.calibrate.ell = ell;
    }
    if let Some(threads) = args.threads {
        if threads == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }

    let report = match command {
        Command::Reduce(_) => commands::reduce(&config)?,
        Command::Density(_) => commands::density(&config)?,
        Command::Moments(_) => commands::moments(&config)?,
        Command::Respond(_) => commands::respond(&config, config.response.ell)?,
        Command::Calibrate(_) => commands::calibrate(&config, args.order)?,
    };
    let outputs = report.outputs.write(&config.out)?;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: command.name(),
        config: &config,
        threads: rayon::current_num_threads(),
        table: report.table,
        run_stats: report.stats.into(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        outputs,
    };
    write_manifest(&config.out, &manifest)
}
