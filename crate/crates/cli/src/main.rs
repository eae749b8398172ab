use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dgs_cli::{exit, Command, Overrides, RunOptions};

#[derive(Parser)]
#[command(name = "dgs", version, about = "Dissipative Gibbs sampler experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Check the invariants of the configured instrument and schedule
    Validate(Common),
    /// Simulate an ensemble of stopped trajectories
    Sample(Common),
    /// Evaluate expected state and stopping time exactly
    Expected(Common),
    /// Estimate the partition function from reset statistics
    Partition(Common),
    /// Run the fault-resilience experiment for the configured noise model
    Noise(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Override master_seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override n_trajectories
    #[arg(long)]
    trajectories: Option<u64>,
    /// Worker threads for ensembles; never changes results
    #[arg(long)]
    workers: Option<usize>,
    /// Override output_path
    #[arg(long)]
    output: Option<PathBuf>,
    /// Add wall-clock timings to the report (output is then not byte-stable)
    #[arg(long)]
    timings: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Sub::Validate(c) => (Command::Validate, c),
        Sub::Sample(c) => (Command::Sample, c),
        Sub::Expected(c) => (Command::Expected, c),
        Sub::Partition(c) => (Command::Partition, c),
        Sub::Noise(c) => (Command::Noise, c),
    };
    if common.workers == Some(0) {
        eprintln!("error: --workers must be at least 1");
        return ExitCode::from(exit::CONFIG as u8);
    }
    let overrides = Overrides {
        seed: common.seed,
        trajectories: common.trajectories,
        output: common.output,
    };
    let opts = RunOptions {
        workers: common.workers,
        timings: common.timings,
    };
    let result = dgs_cli::load(&common.config, &overrides)
        .and_then(|cfg| dgs_cli::execute(command, &cfg, &opts));
    match result {
        Ok((outcome, stdout)) => {
            if let Some(bytes) = stdout {
                let _ = std::io::stdout().write_all(&bytes);
            }
            if outcome.failures.is_empty() {
                ExitCode::from(exit::OK as u8)
            } else {
                eprintln!("invariant checks failed: {}", outcome.failures.join(", "));
                ExitCode::from(exit::INVARIANT as u8)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
