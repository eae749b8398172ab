//! Experiment runner for the dissipative Gibbs sampler: JSON configuration in,
//! byte-stable JSON reports (and optional per-trajectory CSV) out.

// range checks are written `!(x > 0.0)` so that NaN fails them
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};

use dgs_core::DgsError;

pub use commands::{run, Command, Outcome, RunOptions};
pub use config::{load, ExperimentConfig, LoadedConfig, Overrides};

/// Exit statuses.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const INVARIANT: i32 = 3;
    pub const RUNTIME_CAP: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] DgsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("output: {0}")]
    Output(String),
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

fn core_exit_code(e: &DgsError) -> i32 {
    use DgsError::*;
    match e {
        Parse { .. }
        | InvalidParameter { .. }
        | DimensionCap { .. }
        | UnknownStrategy { .. }
        | InvalidSchedule(_)
        | HorizonInsufficient { .. }
        | NotHermitian { .. }
        | ZeroTrials => exit::CONFIG,
        RunawayTrajectory { .. } | SeriesNotConverged(_) => exit::RUNTIME_CAP,
        Trajectory { source, .. } => core_exit_code(source),
        _ => exit::INVARIANT,
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Core(e) => core_exit_code(e),
            CliError::Io(_) | CliError::Output(_) => exit::INVARIANT,
        }
    }
}

/// `out.json` -> `out.trajectories.csv`.
pub fn csv_path(report_path: &Path) -> PathBuf {
    report_path.with_extension("trajectories.csv")
}

/// Runs a command and writes its outputs. Returns the report bytes when no
/// output path is configured.
pub fn execute(
    command: Command,
    cfg: &LoadedConfig,
    opts: &RunOptions,
) -> Result<(Outcome, Option<Vec<u8>>), CliError> {
    let out_path = cfg.output_path();
    if cfg.config.output_format == config::OutputFormat::Csv && out_path.is_none() {
        return Err(CliError::Config(
            "output_path: required when output_format is csv".into(),
        ));
    }
    let outcome = run(command, cfg, opts)?;
    match out_path {
        Some(p) => {
            if let Some(dir) = p.parent() {
                if !dir.as_os_str().is_empty() {
                    fs::create_dir_all(dir)?;
                }
            }
            fs::write(&p, &outcome.json)?;
            if let Some(csv) = &outcome.csv {
                fs::write(csv_path(&p), csv)?;
            }
            Ok((outcome, None))
        }
        None => {
            let bytes = outcome.json.clone();
            Ok((outcome, Some(bytes)))
        }
    }
}
