use thiserror::Error;

pub type Result<T, E = DgsError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DgsError {
    #[error("operator is not hermitian: max |A - A^dagger| = {max_asymmetry:.3e}")]
    NotHermitian { max_asymmetry: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("scalar function is not finite at eigenvalue {eigenvalue}")]
    NonFiniteFunction { eigenvalue: f64 },

    #[error("not a density matrix: {0}")]
    NotDensityMatrix(String),

    #[error("hamiltonian parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("{n_qubits} qubits exceeds the dense dimension cap of {cap} qubits")]
    DimensionCap { n_qubits: usize, cap: usize },

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: String,
    },

    #[error("tr(E0(rho)) = {trace:.3e} is too small to normalize the post-measurement state")]
    DegenerateSupport { trace: f64 },

    #[error("horizon {requested} leaves a tail mass above target; use at least {suggested}")]
    HorizonInsufficient { requested: usize, suggested: usize },

    #[error("index {n} is beyond the schedule horizon {horizon}")]
    BeyondHorizon { n: usize, horizon: usize },

    #[error("invalid stopping schedule: {0}")]
    InvalidSchedule(String),

    #[error("series did not converge: {0}")]
    SeriesNotConverged(String),

    #[error("trajectory exceeded the round cap of {cap} (zero run {zero_run}, {resets} resets)")]
    RunawayTrajectory { cap: u64, zero_run: u64, resets: u64 },

    #[error("trajectory {index} failed: {source}")]
    Trajectory {
        index: u64,
        #[source]
        source: Box<DgsError>,
    },

    #[error("unknown {family} `{name}` (registered: {available})")]
    UnknownStrategy {
        family: &'static str,
        name: String,
        available: String,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("at least one trial is required")]
    ZeroTrials,
}

impl DgsError {
    pub(crate) fn param(name: &'static str, value: f64, reason: impl Into<String>) -> Self {
        DgsError::InvalidParameter {
            name,
            value,
            reason: reason.into(),
        }
    }
}
