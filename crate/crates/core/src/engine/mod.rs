//! The stopped process: stochastic trajectories, ensembles with a
//! deterministic reduction, and the exact evaluators they are checked against.
//!
//! One round is: flip the stop coin with probability `r_n`; if it does not
//! fire, apply the instrument. Outcome 0 keeps the normalized `E0(rho)` and
//! extends the zero run, outcome 1 resets to `I/D`. The stopping time counts
//! the round in which the coin fires, so `tau >= 1`.

mod backends;
mod ensemble;
mod evaluators;

use std::sync::Arc;

use crate::operator::DenseOperator;

pub use backends::{
    run_trajectory, trajectory_backends, CachedBackend, DensityBackend, PureStateBackend,
    RunSettings, Simulator, TrajectoryBackend,
};
pub use ensemble::{
    run_ensemble, EnsembleOptions, EnsembleStats, ObservableMoments, TrajectorySummary,
    CHUNK_SIZE,
};
pub use evaluators::{
    expected_state_closed, expected_state_series, expected_stopping_time_exact,
    expected_stopping_time_series, log_sample_probability, sample_probability, tau_max_bound,
    weighted_orbit_sum, TauMaxBound, NEAR_UNIT_THRESHOLD, SERIES_MAX_TERMS,
};

/// Default cap on rounds per trajectory.
pub const DEFAULT_ROUND_CAP: u64 = 1_000_000_000;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trajectory `index` under `master_seed`.
pub fn trajectory_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(master_seed.wrapping_add(GOLDEN_GAMMA.wrapping_mul(index.wrapping_add(1))))
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    /// Rounds until the stop coin fired, that round included.
    pub tau: u64,
    /// Outcome-1 resets, not counting the initial preparation.
    pub n_resets: u64,
    pub zero_run_at_stop: u64,
    pub final_state: Option<Arc<DenseOperator>>,
}
