//! Experiment configuration: a single JSON document plus command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dgs_core::hamiltonian::{parse_hamiltonian, LocalHamiltonian};
use dgs_core::noise::NoiseModel;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KChoice {
    #[default]
    Product,
    Ideal,
}

impl KChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            KChoice::Product => "product",
            KChoice::Ideal => "ideal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleConfig {
    #[default]
    Cosh,
    /// Coefficients `a_n` read from a JSON array of numbers.
    General {
        coefficients_path: PathBuf,
        #[serde(default)]
        c: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

fn default_trajectories() -> u64 {
    10_000
}

fn default_backend() -> String {
    "cached".into()
}

fn default_delta_trials() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub hamiltonian_path: PathBuf,
    pub beta: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub k_variant: KChoice,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default = "default_trajectories")]
    pub n_trajectories: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub track_state: bool,
    #[serde(default)]
    pub noise: Option<NoiseModel>,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub output_format: OutputFormat,
    #[serde(default = "default_backend")]
    pub backend: String,
    #[serde(default)]
    pub round_cap: Option<u64>,
    /// Random probes for the sampled lower bound on the channel distance.
    #[serde(default = "default_delta_trials")]
    pub delta_trials: usize,
}

/// Overrides taken from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trajectories: Option<u64>,
    pub output: Option<PathBuf>,
}

/// A validated configuration with its referenced files loaded.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub hamiltonian: LocalHamiltonian,
    pub coefficients: Option<Vec<f64>>,
    /// Directory that relative paths in the document resolve against.
    pub base_dir: PathBuf,
}

fn field(name: &str, msg: impl Into<String>) -> CliError {
    CliError::Config(format!("{name}: {}", msg.into()))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.master_seed = s;
        }
        if let Some(n) = o.trajectories {
            self.n_trajectories = n;
        }
        if let Some(p) = &o.output {
            self.output_path = Some(p.clone());
        }
    }

    /// Range checks that do not need the Hamiltonian.
    pub fn check_ranges(&self) -> Result<(), CliError> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(field("beta", format!("{} must be finite and >= 0", self.beta)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(field("epsilon", format!("{} must lie in (0, 1)", self.epsilon)));
        }
        if self.n_trajectories == 0 {
            return Err(field("n_trajectories", "must be at least 1"));
        }
        if self.round_cap == Some(0) {
            return Err(field("round_cap", "must be at least 1"));
        }
        if self.delta_trials == 0 {
            return Err(field("delta_trials", "must be at least 1"));
        }
        if let Some(n) = &self.noise {
            if !(n.strength >= 0.0) || !n.strength.is_finite() {
                return Err(field("noise.strength", format!("{} must be finite and >= 0", n.strength)));
            }
        }
        if let ScheduleConfig::General { c: Some(c), .. } = &self.schedule {
            if !c.is_finite() {
                return Err(field("schedule.c", "must be finite"));
            }
        }
        Ok(())
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn read(base: &Path, p: &Path, name: &str) -> Result<String, CliError> {
    let full = resolve(base, p);
    fs::read_to_string(&full).map_err(|e| field(name, format!("{}: {e}", full.display())))
}

/// Reads, overrides and validates a configuration file.
pub fn load(path: &Path, overrides: &Overrides) -> Result<LoadedConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut config = ExperimentConfig::from_json(&text)?;
    config.apply(overrides);
    load_document(config, base)
}

pub fn load_document(config: ExperimentConfig, base_dir: PathBuf) -> Result<LoadedConfig, CliError> {
    config.check_ranges()?;
    let h_text = read(&base_dir, &config.hamiltonian_path, "hamiltonian_path")?;
    let hamiltonian =
        parse_hamiltonian(&h_text).map_err(|e| field("hamiltonian_path", e.to_string()))?;
    let coefficients = match &config.schedule {
        ScheduleConfig::Cosh => None,
        ScheduleConfig::General { coefficients_path, .. } => {
            let t = read(&base_dir, coefficients_path, "schedule.coefficients_path")?;
            let v: Vec<f64> = serde_json::from_str(&t)
                .map_err(|e| field("schedule.coefficients_path", e.to_string()))?;
            Some(v)
        }
    };
    Ok(LoadedConfig {
        config,
        hamiltonian,
        coefficients,
        base_dir,
    })
}

impl LoadedConfig {
    pub fn output_path(&self) -> Option<PathBuf> {
        self.config
            .output_path
            .as_ref()
            .map(|p| resolve(&self.base_dir, p))
    }
}
