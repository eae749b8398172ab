//! Subcommands. Each returns the encoded report plus any side tables; writing
//! them out is left to the caller.

use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use dgs_core::calibration::constants;
use dgs_core::engine::{
    expected_state_closed, expected_state_series, expected_stopping_time_exact,
    expected_stopping_time_series, run_ensemble, sample_probability, tau_max_bound,
    EnsembleOptions, EnsembleStats, TauMaxBound, DEFAULT_ROUND_CAP,
};
use dgs_core::estimators::{
    estimate_partition, fault_resilience_for, gibbs_error_budget, partition_exact_inversion,
    ErrorBudget, FaultReport, PartitionEstimate, PartitionInversion,
};
use dgs_core::hamiltonian::{exact_gibbs, log_trace_exp};
use dgs_core::instrument::{build_k_product, k_deviation, kraus_constructions, Instrument};
use dgs_core::operator::{eig_h, operator_norm, trace_norm, Channel, DenseOperator};
use dgs_core::stopping::{cosh_schedule_auto, general_schedule, lambda_param, StoppingSchedule};

use crate::config::{LoadedConfig, OutputFormat, ScheduleConfig};
use crate::report::{to_json_bytes, ConfigEcho, Derived, MatrixJson, RunReport, Timings};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Validate,
    Sample,
    Expected,
    Partition,
    Noise,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Sample => "sample",
            Command::Expected => "expected",
            Command::Partition => "partition",
            Command::Noise => "noise",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub workers: Option<usize>,
    pub timings: bool,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub json: Vec<u8>,
    /// Per-trajectory table for `sample` with CSV output.
    pub csv: Option<Vec<u8>>,
    /// Names of failed invariant checks; nonempty means exit status 3.
    pub failures: Vec<String>,
}

struct Setup {
    inst: Instrument,
    sched: StoppingSchedule,
    lambda: f64,
    derived: Derived,
    echo: ConfigEcho,
    warnings: Vec<String>,
}

impl Setup {
    fn is_cosh(&self) -> bool {
        self.sched.lambda().is_some()
    }
}

fn setup(cfg: &LoadedConfig) -> Result<Setup, CliError> {
    let c = &cfg.config;
    let h = &cfg.hamiltonian;
    let inst = kraus_constructions()
        .get(c.k_variant.as_str())?
        .build(h, c.epsilon)?;
    let lambda = lambda_param(c.beta, h.kappa(), c.epsilon, h.m())?;
    let sched = match (&c.schedule, &cfg.coefficients) {
        (ScheduleConfig::General { c: scale, .. }, Some(a)) => general_schedule(a, *scale)?,
        _ => cosh_schedule_auto(lambda)?,
    };
    let tau_max = tau_max_bound(c.epsilon, h.m(), lambda)?;
    let mut warnings = Vec::new();
    if h.m() == 1 {
        warnings.push(
            "m = 1: the product K can have eigenvalue 1, so the tight tau_max bound \
             degenerates (reported as null) and the near-unit limit branch of E[tau] applies"
                .to_string(),
        );
    }
    if c.beta > 0.0 {
        let b = gibbs_error_budget(c.beta, c.epsilon, h.kappa(), h.m());
        if b.exponential > b.linear {
            warnings.push(format!(
                "exp(-beta kappa / eps) term ({:.3e}) dominates the linear budget ({:.3e})",
                b.exponential, b.linear
            ));
        }
    }
    let derived = Derived {
        n_qubits: h.n_qubits(),
        dim: h.dim(),
        m: h.m(),
        kappa: h.kappa(),
        lambda,
        mu_min: inst.mu_min(),
        mu_max: inst.mu_max(),
        tau_max_tight: tau_max.tight,
        tau_max_coarse: tau_max.coarse,
        schedule_horizon: sched.horizon(),
    };
    Ok(Setup {
        inst,
        sched,
        lambda,
        derived,
        echo: ConfigEcho::new(c, cfg.coefficients.clone()),
        warnings,
    })
}

fn encode<R: Serialize>(
    command: Command,
    s: Setup,
    results: R,
    started: Instant,
    opts: &RunOptions,
) -> Result<Vec<u8>, CliError> {
    let mut report = RunReport::new(command.name(), s.echo, s.derived, results);
    report.warnings = s.warnings;
    if opts.timings {
        report.timings = Some(Timings {
            total_seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok(to_json_bytes(&report)?)
}

pub fn run(command: Command, cfg: &LoadedConfig, opts: &RunOptions) -> Result<Outcome, CliError> {
    let started = Instant::now();
    match command {
        Command::Validate => validate(cfg, opts, started),
        Command::Sample => sample(cfg, opts, started),
        Command::Expected => expected(cfg, opts, started),
        Command::Partition => partition(cfg, opts, started),
        Command::Noise => noise(cfg, opts, started),
    }
}

fn done(json: Vec<u8>) -> Outcome {
    Outcome {
        json,
        csv: None,
        failures: Vec::new(),
    }
}

// ---------------------------------------------------------------- validate

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub measured: f64,
    pub limit: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidateResults {
    pub passed: bool,
    pub checks: Vec<Check>,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// `k_deviation` on `top 10^{-j/3}`, `j = 0..=3`, `top = min(eps, 0.01)`, and
/// its log-log slope. The slope approaches 2 only as `eps -> 0`; above 0.01
/// the cubic terms bend it visibly for many-term instances.
pub fn k_deviation_sweep(
    h: &dgs_core::hamiltonian::LocalHamiltonian,
    epsilon: f64,
) -> Result<(Vec<f64>, Vec<f64>, f64), CliError> {
    let top = epsilon.min(0.01);
    let eps: Vec<f64> = (0..4).map(|j| top * 10f64.powf(-(j as f64) / 3.0)).collect();
    let dev = eps
        .iter()
        .map(|&e| k_deviation(h, e))
        .collect::<Result<Vec<_>, _>>()?;
    let slope = log_log_slope(&eps, &dev);
    Ok((eps, dev, slope))
}

fn validate(cfg: &LoadedConfig, opts: &RunOptions, started: Instant) -> Result<Outcome, CliError> {
    let s = setup(cfg)?;
    let h = &cfg.hamiltonian;
    let eps = cfg.config.epsilon;
    let mut checks = Vec::new();

    let asym = s.inst.k().max_asymmetry();
    checks.push(Check {
        name: "k_hermitian",
        passed: asym <= 1e-12,
        measured: asym,
        limit: 1e-12,
        detail: "max |K - K^dagger|".into(),
    });
    let norm = operator_norm(s.inst.k());
    checks.push(Check {
        name: "k_contraction",
        passed: norm <= 1.0 + 1e-12,
        measured: norm,
        limit: 1.0,
        detail: "||K|| <= 1".into(),
    });

    let product = build_k_product(h, eps)?;
    let m = h.m();
    let lo = (1.0 - eps).powi(2 * m as i32);
    let hi = (1.0 - (m as f64 - 1.0) * eps / m as f64).powi(2 * m as i32);
    let ev = product.spectrum().eigenvalues();
    let excess = ev
        .iter()
        .map(|&x| (lo - x).max(x - hi).max(0.0))
        .fold(0.0, f64::max);
    checks.push(Check {
        name: "spectral_sandwich",
        passed: excess <= 1e-12,
        measured: excess,
        limit: 1e-12,
        detail: format!(
            "eigenvalues of product K in [{lo:.17e}, {hi:.17e}], observed [{:.17e}, {:.17e}]",
            product.spectrum().min(),
            product.spectrum().max()
        ),
    });

    let (sweep, devs, slope) = k_deviation_sweep(h, eps)?;
    let scaling_ok = devs.iter().all(|d| *d > 0.0) && (slope - 2.0).abs() <= 0.1;
    checks.push(Check {
        name: "k_deviation_scaling",
        passed: scaling_ok,
        measured: slope,
        limit: 2.0,
        detail: format!(
            "log-log slope of ||K - K~|| over [{:.3e}, {:.3e}], required 2 +- 0.1",
            sweep[3], sweep[0]
        ),
    });
    let mf = m as f64;
    let dev = k_deviation(h, eps)?;
    let dev_limit = constants().k_deviation * eps * eps * mf * mf;
    checks.push(Check {
        name: "k_deviation_bound",
        passed: dev <= dev_limit,
        measured: dev,
        limit: dev_limit,
        detail: "||K - K~|| <= C eps^2 m^2 with the calibrated C".into(),
    });

    let r_ok = s.sched.stop_probs().iter().all(|r| (0.0..=1.0).contains(r));
    let (mass_gap, mass_limit, mass_detail) = match s.sched.lambda() {
        Some(_) => {
            let total: f64 = s.sched.weights().iter().sum();
            let tail = s.sched.weight_tail_bound(s.sched.horizon());
            ((1.0 - total).abs(), tail + 1e-12, "|1 - sum w_n| within the certified tail".to_string())
        }
        None => {
            let coeffs = cfg.coefficients.as_deref().unwrap_or(&[]);
            let c = match s.sched.kind() {
                dgs_core::stopping::ScheduleKind::General { c, .. } => *c,
                _ => unreachable!(),
            };
            let gap = coeffs
                .iter()
                .zip(s.sched.weights())
                .map(|(a, w)| (w - c * a).abs() / (1.0 + (c * a).abs()))
                .fold(0.0, f64::max);
            (gap, 1e-12, "max |w_n - c a_n|".to_string())
        }
    };
    checks.push(Check {
        name: "schedule_valid",
        passed: r_ok && mass_gap <= mass_limit,
        measured: mass_gap,
        limit: mass_limit,
        detail: if r_ok {
            mass_detail
        } else {
            "some r_n outside [0, 1]".into()
        },
    });

    let rho0 = DenseOperator::maximally_mixed(s.inst.dim());
    if s.is_cosh() {
        let closed = expected_state_closed(&s.inst, s.lambda)?;
        let series = expected_state_series(&s.inst, &s.sched, &rho0, 1e-12)?;
        let gap = trace_norm(&closed.sub(&series));
        checks.push(Check {
            name: "closed_vs_series_state",
            passed: gap <= 1e-8,
            measured: gap,
            limit: 1e-8,
            detail: "||closed - series||_1".into(),
        });

        let lambda_p = lambda_param(cfg.config.beta, h.kappa(), eps, m)?;
        let t = expected_stopping_time_exact(&product, lambda_p);
        let bound = tau_max_bound(eps, m, lambda_p)?;
        let rhs = bound.tight.unwrap_or(bound.coarse);
        let chain_ok = t <= rhs * (1.0 + 1e-10)
            && bound.tight.is_none_or(|tt| tt <= bound.coarse * (1.0 + 1e-10));
        checks.push(Check {
            name: "tau_below_tau_max",
            passed: chain_ok,
            measured: t,
            limit: rhs,
            detail: format!(
                "E[tau] <= tight <= coarse = {:.6e} (product K){}",
                bound.coarse,
                if bound.tight.is_none() { "; tight bound unavailable for m = 1" } else { "" }
            ),
        });
    }

    let failures: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.to_string())
        .collect();
    let results = ValidateResults {
        passed: failures.is_empty(),
        checks,
    };
    let json = encode(Command::Validate, s, results, started, opts)?;
    Ok(Outcome {
        json,
        csv: None,
        failures,
    })
}

// ---------------------------------------------------------------- sample

#[derive(Debug, Clone, Serialize)]
pub struct SampleResults {
    pub n_trajectories: u64,
    pub mean_tau: f64,
    pub tau_stderr: f64,
    pub total_rounds: u64,
    pub total_resets: u64,
    pub outcome_one_resets: u64,
    pub runs_over_resets: f64,
    pub stop_level_counts: Vec<u64>,
    pub expected_tau: f64,
    pub expected_tau_method: &'static str,
    pub sample_probability: Option<f64>,
    pub mean_state: Option<MatrixJson>,
}

fn ensemble(cfg: &LoadedConfig, s: &Setup, opts: &RunOptions, keep: bool) -> Result<EnsembleStats, CliError> {
    let c = &cfg.config;
    let mut e = EnsembleOptions::new(c.n_trajectories, c.master_seed);
    e.track_state = c.track_state;
    e.workers = opts.workers;
    e.backend = c.backend.clone();
    e.round_cap = c.round_cap.unwrap_or(DEFAULT_ROUND_CAP);
    e.keep_records = keep;
    let channel: Arc<dyn Channel> = Arc::new(s.inst.clone());
    Ok(run_ensemble(channel, Arc::new(s.sched.clone()), &e)?)
}

fn expected_tau(s: &Setup) -> Result<(f64, &'static str), CliError> {
    if s.is_cosh() {
        Ok((expected_stopping_time_exact(&s.inst, s.lambda), "closed_form"))
    } else {
        let rho0 = DenseOperator::maximally_mixed(s.inst.dim());
        Ok((expected_stopping_time_series(&s.inst, &s.sched, &rho0)?, "series"))
    }
}

fn sample(cfg: &LoadedConfig, opts: &RunOptions, started: Instant) -> Result<Outcome, CliError> {
    let s = setup(cfg)?;
    let want_csv = cfg.config.output_format == OutputFormat::Csv;
    let stats = ensemble(cfg, &s, opts, want_csv)?;
    let (expected_tau, method) = expected_tau(&s)?;
    let csv = match (&stats.records, want_csv) {
        (Some(records), true) => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in records {
                w.serialize(r).map_err(|e| CliError::Output(e.to_string()))?;
            }
            Some(w.into_inner().map_err(|e| CliError::Output(e.to_string()))?)
        }
        _ => None,
    };
    let results = SampleResults {
        n_trajectories: stats.n_trajectories,
        mean_tau: stats.mean_tau,
        tau_stderr: stats.tau_stderr,
        total_rounds: stats.total_rounds,
        total_resets: stats.total_resets,
        outcome_one_resets: stats.outcome_one_resets,
        runs_over_resets: stats.runs_over_resets,
        stop_level_counts: stats.stop_level_counts.clone(),
        expected_tau,
        expected_tau_method: method,
        sample_probability: s.is_cosh().then(|| sample_probability(&s.inst, s.lambda)),
        mean_state: stats.mean_state.as_ref().map(MatrixJson::from),
    };
    let json = encode(Command::Sample, s, results, started, opts)?;
    Ok(Outcome {
        json,
        csv,
        failures: Vec::new(),
    })
}

// ---------------------------------------------------------------- expected

#[derive(Debug, Clone, Serialize)]
pub struct ExpectedResults {
    pub state_method: &'static str,
    pub expected_state: MatrixJson,
    pub closed_vs_series_trace_distance: Option<f64>,
    pub gibbs_trace_distance: f64,
    pub gibbs_error_budget: ErrorBudget,
    pub within_budget: bool,
    pub expected_tau_exact: Option<f64>,
    pub expected_tau_series: f64,
    pub tau_relative_difference: Option<f64>,
    pub tau_max: TauMaxBound,
    pub log_partition_exact: f64,
    pub sample_probability: Option<f64>,
}

fn expected(cfg: &LoadedConfig, opts: &RunOptions, started: Instant) -> Result<Outcome, CliError> {
    let s = setup(cfg)?;
    let c = &cfg.config;
    let h = &cfg.hamiltonian;
    let rho0 = DenseOperator::maximally_mixed(s.inst.dim());
    let series = expected_state_series(&s.inst, &s.sched, &rho0, 1e-12)?;
    let (state, method, gap) = if s.is_cosh() {
        let closed = expected_state_closed(&s.inst, s.lambda)?;
        let gap = trace_norm(&closed.sub(&series));
        (closed, "closed_form", Some(gap))
    } else {
        (series, "series", None)
    };
    let oracle = exact_gibbs(h, c.beta)?;
    let distance = trace_norm(&state.sub(&oracle.gibbs_state));
    let budget = gibbs_error_budget(c.beta, c.epsilon, h.kappa(), h.m());
    let tau_series = expected_stopping_time_series(&s.inst, &s.sched, &rho0)?;
    let tau_exact = s
        .is_cosh()
        .then(|| expected_stopping_time_exact(&s.inst, s.lambda));
    let results = ExpectedResults {
        state_method: method,
        expected_state: MatrixJson::from(&state),
        closed_vs_series_trace_distance: gap,
        gibbs_trace_distance: distance,
        within_budget: distance <= budget.total,
        gibbs_error_budget: budget,
        expected_tau_exact: tau_exact,
        expected_tau_series: tau_series,
        tau_relative_difference: tau_exact.map(|t| (tau_series - t).abs() / t),
        tau_max: tau_max_bound(c.epsilon, h.m(), s.lambda)?,
        log_partition_exact: oracle.log_partition,
        sample_probability: s.is_cosh().then(|| sample_probability(&s.inst, s.lambda)),
    };
    Ok(done(encode(Command::Expected, s, results, started, opts)?))
}

// ---------------------------------------------------------------- partition

#[derive(Debug, Clone, Serialize)]
pub struct PartitionResults {
    pub estimate: PartitionEstimate,
    /// `stat_error` scaled to the 4-sigma acceptance band plus `bound`.
    pub allowed_rel_error: f64,
    pub within_allowed: Option<bool>,
    pub sample_probability_exact: f64,
    pub inversion: PartitionInversion,
    pub inversion_rel_error: f64,
    pub mean_tau: f64,
    pub total_resets: u64,
}

fn partition(cfg: &LoadedConfig, opts: &RunOptions, started: Instant) -> Result<Outcome, CliError> {
    let s = setup(cfg)?;
    if !s.is_cosh() {
        return Err(CliError::Config(
            "schedule: partition estimation requires the cosh schedule".into(),
        ));
    }
    let c = &cfg.config;
    let h = &cfg.hamiltonian;
    let stats = ensemble(cfg, &s, opts, false)?;
    let oracle = exact_gibbs(h, c.beta)?;
    let est = estimate_partition(
        &stats,
        c.beta,
        c.epsilon,
        h.kappa(),
        h.m(),
        h.dim(),
        Some(oracle.log_partition),
    )?;
    let p = sample_probability(&s.inst, s.lambda);
    let spectrum = eig_h(&h.to_dense()?)?;
    let inversion = partition_exact_inversion(
        p,
        c.beta,
        h.kappa(),
        c.epsilon,
        h.m(),
        h.dim(),
        log_trace_exp(&spectrum, -c.beta),
    )?;
    let allowed = est.bound + 4.0 * est.stat_error;
    let results = PartitionResults {
        allowed_rel_error: allowed,
        within_allowed: est.rel_error.map(|r| r <= allowed),
        sample_probability_exact: p,
        inversion_rel_error: (inversion.z.ln() - oracle.log_partition).exp_m1().abs(),
        inversion,
        mean_tau: stats.mean_tau,
        total_resets: stats.total_resets,
        estimate: est,
    };
    Ok(done(encode(Command::Partition, s, results, started, opts)?))
}

// ---------------------------------------------------------------- noise

fn noise(cfg: &LoadedConfig, opts: &RunOptions, started: Instant) -> Result<Outcome, CliError> {
    let model = cfg
        .config
        .noise
        .ok_or_else(|| CliError::Config("noise: the noise subcommand requires noise fields".into()))?;
    let s = setup(cfg)?;
    if !s.is_cosh() {
        return Err(CliError::Config(
            "schedule: the fault experiment requires the cosh schedule".into(),
        ));
    }
    let report: FaultReport =
        fault_resilience_for(&s.inst, cfg.config.beta, &model, cfg.config.delta_trials)?;
    Ok(done(encode(Command::Noise, s, report, started, opts)?))
}
