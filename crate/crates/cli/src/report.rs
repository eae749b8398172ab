//! Run reports and their byte-stable JSON encoding.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use dgs_core::calibration::Calibration;
use dgs_core::noise::NoiseModel;
use dgs_core::operator::DenseOperator;

use crate::config::{ExperimentConfig, KChoice, ScheduleConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// Every configuration knob that can change a reported number. Output
/// location and worker count are left out on purpose: they never do.
#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub hamiltonian_path: String,
    pub beta: f64,
    pub epsilon: f64,
    pub k_variant: KChoice,
    pub schedule: ScheduleConfig,
    pub schedule_coefficients: Option<Vec<f64>>,
    pub n_trajectories: u64,
    pub master_seed: u64,
    pub track_state: bool,
    pub noise: Option<NoiseModel>,
    pub backend: String,
    pub round_cap: Option<u64>,
    pub delta_trials: usize,
}

impl ConfigEcho {
    pub fn new(c: &ExperimentConfig, coefficients: Option<Vec<f64>>) -> Self {
        Self {
            hamiltonian_path: c.hamiltonian_path.display().to_string(),
            beta: c.beta,
            epsilon: c.epsilon,
            k_variant: c.k_variant,
            schedule: c.schedule.clone(),
            schedule_coefficients: coefficients,
            n_trajectories: c.n_trajectories,
            master_seed: c.master_seed,
            track_state: c.track_state,
            noise: c.noise,
            backend: c.backend.clone(),
            round_cap: c.round_cap,
            delta_trials: c.delta_trials,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Derived {
    pub n_qubits: usize,
    pub dim: usize,
    pub m: usize,
    pub kappa: f64,
    pub lambda: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    pub tau_max_tight: Option<f64>,
    pub tau_max_coarse: f64,
    pub schedule_horizon: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    pub total_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport<R: Serialize> {
    pub schema_version: u32,
    pub command: &'static str,
    pub version: &'static str,
    pub calibration_sha256: String,
    pub config: ConfigEcho,
    pub derived: Derived,
    pub warnings: Vec<String>,
    pub results: R,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

impl<R: Serialize> RunReport<R> {
    pub fn new(command: &'static str, config: ConfigEcho, derived: Derived, results: R) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command,
            version: env!("CARGO_PKG_VERSION"),
            calibration_sha256: Calibration::sha256(),
            config,
            derived,
            warnings: Vec::new(),
            results,
            timings: None,
        }
    }
}

/// Dense matrix as separate real and imaginary row arrays.
#[derive(Debug, Clone, Serialize)]
pub struct MatrixJson {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<&DenseOperator> for MatrixJson {
    fn from(op: &DenseOperator) -> Self {
        let m = op.matrix();
        let rows = |f: fn(&num_complex::Complex64) -> f64| {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect())
                .collect()
        };
        Self {
            re: rows(|z| z.re),
            im: rows(|z| z.im),
        }
    }
}

/// Pretty JSON with every float written in 17 significant digits.
/// Non-finite floats become `null`.
struct FixedDigits<'a>(PrettyFormatter<'a>);

impl Formatter for FixedDigits<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> serde_json::Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedDigits(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(out)
}
