//! Trajectory backends. All of them consume the per-round random numbers in
//! the same order (stop coin, then measurement outcome), so for a given seed
//! they agree up to floating-point ties.

use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{TrajectoryRecord, DEFAULT_ROUND_CAP};
use crate::error::{DgsError, Result};
use crate::operator::{Channel, DenseOperator};
use crate::registry::{Named, Registry};
use crate::stopping::StoppingSchedule;

/// Probability below which outcome 0 is treated as impossible.
const MIN_PROB: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSettings {
    pub track_state: bool,
    pub round_cap: u64,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            track_state: false,
            round_cap: DEFAULT_ROUND_CAP,
        }
    }
}

/// A backend bound to one channel and schedule, ready to run trajectories.
pub trait Simulator: Send + Sync {
    fn run(&self, seed: u64) -> Result<TrajectoryRecord>;
}

pub trait TrajectoryBackend: Named + Send + Sync {
    fn prepare(
        &self,
        channel: Arc<dyn Channel>,
        sched: Arc<StoppingSchedule>,
        settings: RunSettings,
    ) -> Result<Box<dyn Simulator>>;
}

pub fn trajectory_backends() -> Registry<dyn TrajectoryBackend> {
    Registry::<dyn TrajectoryBackend>::new("trajectory backend")
        .with(Box::new(CachedBackend))
        .with(Box::new(DensityBackend))
        .with(Box::new(PureStateBackend))
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn runaway(cap: u64, zero_run: u64, resets: u64) -> DgsError {
    DgsError::RunawayTrajectory {
        cap,
        zero_run,
        resets,
    }
}

/// One trajectory with a literal density matrix, as in the round description.
pub fn run_trajectory(
    channel: Arc<dyn Channel>,
    sched: Arc<StoppingSchedule>,
    seed: u64,
    track_state: bool,
) -> Result<TrajectoryRecord> {
    let settings = RunSettings {
        track_state,
        ..RunSettings::default()
    };
    DensityBackend.prepare(channel, sched, settings)?.run(seed)
}

/// Propagates the full density matrix every round.
pub struct DensityBackend;

struct DensitySim {
    channel: Arc<dyn Channel>,
    sched: Arc<StoppingSchedule>,
    settings: RunSettings,
    reset: DenseOperator,
}

impl Named for DensityBackend {
    fn name(&self) -> &'static str {
        "density"
    }
}

impl TrajectoryBackend for DensityBackend {
    fn prepare(
        &self,
        channel: Arc<dyn Channel>,
        sched: Arc<StoppingSchedule>,
        settings: RunSettings,
    ) -> Result<Box<dyn Simulator>> {
        let reset = DenseOperator::maximally_mixed(channel.dim());
        Ok(Box::new(DensitySim {
            channel,
            sched,
            settings,
            reset,
        }))
    }
}

impl Simulator for DensitySim {
    fn run(&self, seed: u64) -> Result<TrajectoryRecord> {
        let mut rng = rng_for(seed);
        let mut rho = self.reset.clone();
        let mut n = 0u64;
        let mut resets = 0u64;
        let mut rounds = 0u64;
        loop {
            if rounds == self.settings.round_cap {
                return Err(runaway(self.settings.round_cap, n, resets));
            }
            rounds += 1;
            let r = self.sched.stop_prob_at(n as usize);
            if rng.random::<f64>() < r {
                return Ok(TrajectoryRecord {
                    tau: rounds,
                    n_resets: resets,
                    zero_run_at_stop: n,
                    final_state: self.settings.track_state.then(|| Arc::new(rho)),
                });
            }
            let out = self.channel.apply(&rho);
            let p = out.real_trace();
            if p >= MIN_PROB && rng.random::<f64>() < p {
                rho = out.scale(1.0 / p);
                n += 1;
            } else {
                rho = self.reset.clone();
                n = 0;
                resets += 1;
            }
        }
    }
}

/// Exploits that the state after `n` zeros from a reset is a deterministic
/// function of `n`: the zero-run states and their outcome-0 probabilities are
/// computed once and shared by every trajectory. Levels beyond the shared
/// prefix are extended locally.
pub struct CachedBackend;

struct ZeroRunCache {
    /// `p_n = tr E0(rho_n)`
    probs: Vec<f64>,
    /// `rho_n`, normalized; kept for every level when states are tracked,
    /// otherwise only the last one (the seed for local extension).
    states: Vec<Arc<DenseOperator>>,
    /// The orbit hit a state with `p_n = 0`; no level beyond `probs.len()` is reachable.
    terminated: bool,
}

struct CachedSim {
    channel: Arc<dyn Channel>,
    sched: Arc<StoppingSchedule>,
    settings: RunSettings,
    stop: Vec<f64>,
    cache: ZeroRunCache,
}

impl Named for CachedBackend {
    fn name(&self) -> &'static str {
        "cached"
    }
}

impl CachedBackend {
    /// Number of shared zero-run levels for a schedule.
    pub fn cache_len(sched: &StoppingSchedule) -> usize {
        sched.horizon() + 16
    }
}

impl TrajectoryBackend for CachedBackend {
    fn prepare(
        &self,
        channel: Arc<dyn Channel>,
        sched: Arc<StoppingSchedule>,
        settings: RunSettings,
    ) -> Result<Box<dyn Simulator>> {
        let len = Self::cache_len(&sched);
        let stop = sched.extended(len).stop_probs().to_vec();
        let mut probs = Vec::with_capacity(len);
        let mut states = Vec::new();
        let mut rho = Arc::new(DenseOperator::maximally_mixed(channel.dim()));
        let mut terminated = false;
        for _ in 0..len {
            let out = channel.apply(&rho);
            let p = out.real_trace();
            if settings.track_state {
                states.push(rho.clone());
            }
            if !(p >= MIN_PROB) {
                probs.push(0.0);
                terminated = true;
                break;
            }
            probs.push(p);
            rho = Arc::new(out.scale(1.0 / p));
        }
        if !terminated {
            // rho_len, the starting point for levels past the cache
            states.push(rho);
        } else if !settings.track_state {
            states.push(rho);
        }
        Ok(Box::new(CachedSim {
            channel,
            sched,
            settings,
            stop,
            cache: ZeroRunCache {
                probs,
                states,
                terminated,
            },
        }))
    }
}

impl CachedSim {
    fn stop_prob(&self, n: usize) -> f64 {
        match self.stop.get(n) {
            Some(r) => *r,
            None => self.sched.stop_prob_at(n),
        }
    }

    fn cached_state(&self, n: usize) -> Arc<DenseOperator> {
        if self.settings.track_state {
            self.cache.states[n].clone()
        } else {
            unreachable!("states are only requested when tracked")
        }
    }
}

impl Simulator for CachedSim {
    fn run(&self, seed: u64) -> Result<TrajectoryRecord> {
        let mut rng = rng_for(seed);
        let cached = self.cache.probs.len();
        // levels >= cached, built on demand: (rho_n, p_n)
        let mut local: Vec<(Arc<DenseOperator>, f64)> = Vec::new();
        let mut n = 0usize;
        let mut resets = 0u64;
        let mut rounds = 0u64;
        loop {
            if rounds == self.settings.round_cap {
                return Err(runaway(self.settings.round_cap, n as u64, resets));
            }
            rounds += 1;
            if rng.random::<f64>() < self.stop_prob(n) {
                let final_state = if !self.settings.track_state {
                    None
                } else if n < cached {
                    Some(self.cached_state(n))
                } else if n == cached {
                    Some(self.cache.states[cached].clone())
                } else {
                    Some(local[n - cached - 1].0.clone())
                };
                return Ok(TrajectoryRecord {
                    tau: rounds,
                    n_resets: resets,
                    zero_run_at_stop: n as u64,
                    final_state,
                });
            }
            let p = if n < cached {
                self.cache.probs[n]
            } else {
                if self.cache.terminated {
                    unreachable!("levels past a terminated orbit have probability zero");
                }
                while local.len() <= n - cached {
                    let prev = match local.last() {
                        Some((rho, _)) => rho.clone(),
                        None => self.cache.states[self.cache.states.len() - 1].clone(),
                    };
                    let out = self.channel.apply(&prev);
                    let p = out.real_trace();
                    let next = if p >= MIN_PROB {
                        Arc::new(out.scale(1.0 / p))
                    } else {
                        prev
                    };
                    // entry k holds rho_{cached+k+1} and p_{cached+k}
                    local.push((next, p.max(0.0)));
                }
                local[n - cached].1
            };
            if p >= MIN_PROB && rng.random::<f64>() < p {
                n += 1;
            } else {
                n = 0;
                resets += 1;
            }
        }
    }
}

/// Pure-state unraveling: each reset draws a uniformly random computational
/// basis state, whose average is `I/D`. Needs a single Kraus operator.
pub struct PureStateBackend;

struct PureSim {
    k: DenseOperator,
    sched: Arc<StoppingSchedule>,
    settings: RunSettings,
}

impl Named for PureStateBackend {
    fn name(&self) -> &'static str {
        "pure"
    }
}

impl TrajectoryBackend for PureStateBackend {
    fn prepare(
        &self,
        channel: Arc<dyn Channel>,
        sched: Arc<StoppingSchedule>,
        settings: RunSettings,
    ) -> Result<Box<dyn Simulator>> {
        let k = channel.kraus_operator().cloned().ok_or_else(|| {
            DgsError::Invariant(format!(
                "pure-state backend needs a single-Kraus channel, got {}",
                channel.label()
            ))
        })?;
        Ok(Box::new(PureSim { k, sched, settings }))
    }
}

impl PureSim {
    fn basis_state(&self, rng: &mut ChaCha8Rng) -> DVector<Complex64> {
        let d = self.k.dim();
        let mut psi = DVector::zeros(d);
        psi[rng.random_range(0..d)] = Complex64::new(1.0, 0.0);
        psi
    }
}

impl Simulator for PureSim {
    fn run(&self, seed: u64) -> Result<TrajectoryRecord> {
        let mut rng = rng_for(seed);
        let mut psi = self.basis_state(&mut rng);
        let mut n = 0u64;
        let mut resets = 0u64;
        let mut rounds = 0u64;
        loop {
            if rounds == self.settings.round_cap {
                return Err(runaway(self.settings.round_cap, n, resets));
            }
            rounds += 1;
            if rng.random::<f64>() < self.sched.stop_prob_at(n as usize) {
                return Ok(TrajectoryRecord {
                    tau: rounds,
                    n_resets: resets,
                    zero_run_at_stop: n,
                    final_state: self
                        .settings
                        .track_state
                        .then(|| Arc::new(DenseOperator::projector(&psi))),
                });
            }
            let phi = self.k.matrix() * &psi;
            let p = phi.norm_squared();
            if p >= MIN_PROB && rng.random::<f64>() < p {
                psi = phi.unscale(p.sqrt());
                n += 1;
            } else {
                psi = self.basis_state(&mut rng);
                n = 0;
                resets += 1;
            }
        }
    }
}
