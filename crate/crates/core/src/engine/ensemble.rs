use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::backends::{trajectory_backends, RunSettings, Simulator};
use super::{trajectory_seed, TrajectoryRecord, DEFAULT_ROUND_CAP};
use crate::error::{DgsError, Result};
use crate::operator::{CMatrix, Channel, DenseOperator};
use crate::stopping::StoppingSchedule;

/// Trajectories per work unit. Fixed, so the reduction tree does not depend on
/// how many workers run the units.
pub const CHUNK_SIZE: u64 = 4096;

#[derive(Debug, Clone)]
pub struct EnsembleOptions {
    pub n_trajectories: u64,
    pub master_seed: u64,
    pub track_state: bool,
    /// `None` uses the global rayon pool.
    pub workers: Option<usize>,
    pub backend: String,
    pub round_cap: u64,
    pub keep_records: bool,
    /// Observables whose per-trajectory expectations `tr(O rho_final)` are
    /// accumulated. Requires final states, which are then tracked internally.
    pub observables: Vec<DenseOperator>,
}

impl EnsembleOptions {
    pub fn new(n_trajectories: u64, master_seed: u64) -> Self {
        Self {
            n_trajectories,
            master_seed,
            track_state: false,
            workers: None,
            backend: "cached".into(),
            round_cap: DEFAULT_ROUND_CAP,
            keep_records: false,
            observables: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrajectorySummary {
    pub index: u64,
    pub tau: u64,
    pub n_resets: u64,
    pub zero_run_at_stop: u64,
}

/// Running mean and centered second moment of `tr(O rho_final)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableMoments {
    pub observable: DenseOperator,
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, v: f64) {
        self.count += 1;
        let delta = v - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (v - self.mean);
    }

    fn merge(&mut self, other: Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        let wa = self.count as f64 / n;
        let wb = other.count as f64 / n;
        self.mean = wa * self.mean + wb * other.mean;
        self.m2 += other.m2 + delta * delta * self.count as f64 * wb;
        self.count += other.count;
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleStats {
    pub n_trajectories: u64,
    pub total_rounds: u64,
    /// Initial preparations plus outcome-1 resets.
    pub total_resets: u64,
    pub outcome_one_resets: u64,
    pub mean_tau: f64,
    pub tau_stderr: f64,
    pub runs_over_resets: f64,
    pub mean_state: Option<DenseOperator>,
    pub master_seed: u64,
    /// `stop_level_counts[n]` trajectories stopped with zero run `n`.
    pub stop_level_counts: Vec<u64>,
    pub observables: Vec<ObservableMoments>,
    pub records: Option<Vec<TrajectorySummary>>,
}

#[derive(Default)]
struct Partial {
    rounds: u64,
    rounds_sq: u128,
    resets: u64,
    levels: Vec<u64>,
    state_sum: Option<CMatrix>,
    obs: Vec<Welford>,
    records: Vec<TrajectorySummary>,
}

impl Partial {
    fn absorb(&mut self, index: u64, rec: &TrajectoryRecord, opts: &EnsembleOptions) {
        self.rounds += rec.tau;
        self.rounds_sq += (rec.tau as u128) * (rec.tau as u128);
        self.resets += rec.n_resets;
        let level = rec.zero_run_at_stop as usize;
        if self.levels.len() <= level {
            self.levels.resize(level + 1, 0);
        }
        self.levels[level] += 1;
        if let Some(rho) = &rec.final_state {
            if opts.track_state {
                match &mut self.state_sum {
                    Some(acc) => *acc += rho.matrix(),
                    None => self.state_sum = Some(rho.matrix().clone()),
                }
            }
            if self.obs.is_empty() {
                self.obs = vec![Welford::default(); opts.observables.len()];
            }
            for (slot, o) in self.obs.iter_mut().zip(&opts.observables) {
                slot.push(o.trace_product(rho));
            }
        }
        if opts.keep_records {
            self.records.push(TrajectorySummary {
                index,
                tau: rec.tau,
                n_resets: rec.n_resets,
                zero_run_at_stop: rec.zero_run_at_stop,
            });
        }
    }

    fn merge(&mut self, other: Partial) {
        self.rounds += other.rounds;
        self.rounds_sq += other.rounds_sq;
        self.resets += other.resets;
        if self.levels.len() < other.levels.len() {
            self.levels.resize(other.levels.len(), 0);
        }
        for (a, b) in self.levels.iter_mut().zip(&other.levels) {
            *a += b;
        }
        match (&mut self.state_sum, other.state_sum) {
            (Some(acc), Some(s)) => *acc += s,
            (None, Some(s)) => self.state_sum = Some(s),
            _ => {}
        }
        if self.obs.is_empty() {
            self.obs = other.obs;
        } else {
            for (a, b) in self.obs.iter_mut().zip(other.obs) {
                a.merge(b);
            }
        }
        self.records.extend(other.records);
    }
}

fn run_chunk(sim: &dyn Simulator, chunk: u64, opts: &EnsembleOptions) -> Result<Partial> {
    let start = chunk * CHUNK_SIZE;
    let end = (start + CHUNK_SIZE).min(opts.n_trajectories);
    let mut part = Partial::default();
    for index in start..end {
        let rec = sim
            .run(trajectory_seed(opts.master_seed, index))
            .map_err(|e| DgsError::Trajectory {
                index,
                source: Box::new(e),
            })?;
        part.absorb(index, &rec, opts);
    }
    Ok(part)
}

/// Runs `n_trajectories` independent trajectories and aggregates them in
/// index order. The result is bit-identical for a given master seed whatever
/// the number of workers.
pub fn run_ensemble(
    channel: Arc<dyn Channel>,
    sched: Arc<StoppingSchedule>,
    opts: &EnsembleOptions,
) -> Result<EnsembleStats> {
    if opts.n_trajectories == 0 {
        return Err(DgsError::param("n_trajectories", 0.0, "must be at least 1"));
    }
    let d = channel.dim();
    for o in &opts.observables {
        if o.dim() != d {
            return Err(DgsError::DimensionMismatch {
                expected: d,
                got: o.dim(),
            });
        }
    }
    let settings = RunSettings {
        track_state: opts.track_state || !opts.observables.is_empty(),
        round_cap: opts.round_cap,
    };
    let sim = trajectory_backends()
        .get(&opts.backend)?
        .prepare(channel, sched, settings)?;
    let sim: &dyn Simulator = sim.as_ref();

    let n_chunks = opts.n_trajectories.div_ceil(CHUNK_SIZE);
    let work = || -> Vec<Result<Partial>> {
        (0..n_chunks)
            .into_par_iter()
            .map(|c| run_chunk(sim, c, opts))
            .collect()
    };
    let partials = match opts.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| DgsError::Invariant(format!("cannot start worker pool: {e}")))?
            .install(work),
        None => work(),
    };

    let mut total = Partial::default();
    for p in partials {
        total.merge(p?);
    }

    let n = opts.n_trajectories;
    let nf = n as f64;
    let mean_tau = total.rounds as f64 / nf;
    let tau_stderr = if n > 1 {
        let n128 = n as u128;
        let s = total.rounds as u128;
        let num = n128 * total.rounds_sq - s * s;
        ((num as f64) / (nf * (nf - 1.0)) / nf).sqrt()
    } else {
        0.0
    };
    let total_resets = n + total.resets;
    let mean_state = total
        .state_sum
        .filter(|_| opts.track_state)
        .map(|s| DenseOperator::hermitian_part(s.unscale(nf)));
    let observables = opts
        .observables
        .iter()
        .zip(total.obs.iter().copied().chain(std::iter::repeat(Welford::default())))
        .map(|(o, w)| ObservableMoments {
            observable: o.clone(),
            count: w.count,
            mean: w.mean,
            m2: w.m2,
        })
        .collect();
    Ok(EnsembleStats {
        n_trajectories: n,
        total_rounds: total.rounds,
        total_resets,
        outcome_one_resets: total.resets,
        mean_tau,
        tau_stderr,
        runs_over_resets: nf / total_resets as f64,
        mean_state,
        master_seed: opts.master_seed,
        stop_level_counts: total.levels,
        observables,
        records: opts.keep_records.then_some(total.records),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::LocalHamiltonian;
    use crate::instrument::build_k_product;
    use crate::stopping::{cosh_schedule_auto, lambda_param};

    fn setup(beta: f64) -> (Arc<dyn Channel>, Arc<StoppingSchedule>) {
        let h = LocalHamiltonian::from_terms(2, &[(1.0, "ZI"), (1.0, "IZ")]).unwrap();
        let inst = build_k_product(&h, 0.05).unwrap();
        let lambda = lambda_param(beta, h.kappa(), 0.05, h.m()).unwrap();
        (Arc::new(inst), Arc::new(cosh_schedule_auto(lambda).unwrap()))
    }

    #[test]
    fn single_trajectory_matches_direct_run() {
        let (ch, s) = setup(0.5);
        let mut opts = EnsembleOptions::new(1, 99);
        opts.track_state = true;
        opts.backend = "density".into();
        let stats = run_ensemble(ch.clone(), s.clone(), &opts).unwrap();
        let rec = super::super::run_trajectory(ch, s, trajectory_seed(99, 0), true).unwrap();
        assert_eq!(stats.total_rounds, rec.tau);
        assert_eq!(stats.total_resets, 1 + rec.n_resets);
        assert_eq!(stats.tau_stderr, 0.0);
        assert!(stats.mean_state.unwrap().max_abs_diff(&rec.final_state.unwrap()) < 1e-15);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let (ch, s) = setup(0.5);
        let mut opts = EnsembleOptions::new(3 * CHUNK_SIZE + 17, 5);
        opts.track_state = true;
        opts.keep_records = true;
        opts.workers = Some(1);
        let a = run_ensemble(ch.clone(), s.clone(), &opts).unwrap();
        opts.workers = Some(4);
        let b = run_ensemble(ch, s, &opts).unwrap();
        assert_eq!(a.total_rounds, b.total_rounds);
        assert_eq!(a.total_resets, b.total_resets);
        assert_eq!(a.mean_tau.to_bits(), b.mean_tau.to_bits());
        assert_eq!(a.tau_stderr.to_bits(), b.tau_stderr.to_bits());
        assert_eq!(a.stop_level_counts, b.stop_level_counts);
        assert_eq!(a.records, b.records);
        assert_eq!(a.mean_state.unwrap(), b.mean_state.unwrap());
    }

    #[test]
    fn accounting_identities() {
        let (ch, s) = setup(0.5);
        let mut opts = EnsembleOptions::new(2000, 1);
        opts.keep_records = true;
        let st = run_ensemble(ch, s, &opts).unwrap();
        let recs = st.records.as_ref().unwrap();
        assert_eq!(st.total_rounds, recs.iter().map(|r| r.tau).sum::<u64>());
        assert_eq!(st.total_resets, 2000 + recs.iter().map(|r| r.n_resets).sum::<u64>());
        assert!(st.total_resets >= st.n_trajectories);
        assert!(st.runs_over_resets > 0.0 && st.runs_over_resets <= 1.0);
        assert!(recs.iter().all(|r| r.tau > r.zero_run_at_stop));
        assert_eq!(st.stop_level_counts.iter().sum::<u64>(), 2000);
    }

    #[test]
    fn zero_trajectories_rejected_and_errors_carry_index() {
        let (ch, s) = setup(1.0);
        assert!(run_ensemble(ch.clone(), s.clone(), &EnsembleOptions::new(0, 1)).is_err());
        let mut opts = EnsembleOptions::new(50, 1);
        opts.round_cap = 2;
        match run_ensemble(ch, s, &opts) {
            Err(DgsError::Trajectory { source, .. }) => {
                assert!(matches!(*source, DgsError::RunawayTrajectory { .. }))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn identity_observable_has_no_spread() {
        let (ch, s) = setup(0.5);
        let mut opts = EnsembleOptions::new(500, 2);
        opts.observables = vec![DenseOperator::identity(4)];
        let st = run_ensemble(ch, s, &opts).unwrap();
        assert!(st.mean_state.is_none());
        let m = &st.observables[0];
        assert_eq!(m.count, 500);
        assert!((m.mean - 1.0).abs() < 1e-14);
        assert!(m.m2 < 1e-26);
    }

    #[test]
    fn unknown_backend_is_reported() {
        let (ch, s) = setup(0.5);
        let mut opts = EnsembleOptions::new(5, 1);
        opts.backend = "gpu".into();
        assert!(matches!(
            run_ensemble(ch, s, &opts),
            Err(DgsError::UnknownStrategy { .. })
        ));
    }
}
