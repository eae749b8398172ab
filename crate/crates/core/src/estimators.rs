//! Quantities derived from ensembles and evaluators: the partition-function
//! estimate, observable averages, the Gibbs error budget and the
//! fault-resilience experiment.

use std::f64::consts::LN_2;

use serde::Serialize;

use crate::calibration::constants;
use crate::engine::{
    expected_state_closed, expected_state_series, log_sample_probability, weighted_orbit_sum,
    EnsembleStats,
};
use crate::error::{DgsError, Result};
use crate::hamiltonian::LocalHamiltonian;
use crate::instrument::{build_k_product, Instrument};
use crate::noise::{perturb_instrument, NoiseModel};
use crate::operator::{channel_delta_estimate, trace_norm, Channel, DenseOperator};
use crate::stopping::{cosh_schedule_auto, lambda_param, log_cosh};

/// `beta eps kappa m^2`, the scale of the product-form error.
pub fn product_error_scale(beta: f64, epsilon: f64, kappa: f64, m: usize) -> f64 {
    let mf = m as f64;
    beta * epsilon * kappa * mf * mf
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorBudget {
    /// `C beta eps kappa m^2`
    pub linear: f64,
    /// `2 e^{-beta kappa / eps}`, the ideal-form residual
    pub exponential: f64,
    pub total: f64,
}

/// Budget for `||E[rho_tau] - rho_G||_1` with the calibrated constant.
pub fn gibbs_error_budget(beta: f64, epsilon: f64, kappa: f64, m: usize) -> ErrorBudget {
    let linear = constants().gibbs_error * product_error_scale(beta, epsilon, kappa, m);
    let exponential = 2.0 * (-beta * kappa / epsilon).exp();
    ErrorBudget {
        linear,
        exponential,
        total: linear + exponential,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionEstimate {
    pub log_z_hat: f64,
    pub log_z_exact: Option<f64>,
    /// `|Z_hat / Z - 1|`
    pub rel_error: Option<f64>,
    /// Relative standard error of `Z_hat` from the reset statistics.
    pub stat_error: f64,
    /// `C beta eps kappa m^2`
    pub bound: f64,
    pub runs_over_resets: f64,
}

/// `Z_hat = D e^{beta kappa (2m-1)} (#runs / #resets)`.
///
/// The ratio of totals estimates the per-attempt stop probability `p`; with
/// `N` runs its relative standard error is `sqrt((1 - p) / N)`.
pub fn estimate_partition(
    stats: &EnsembleStats,
    beta: f64,
    epsilon: f64,
    kappa: f64,
    m: usize,
    dim: usize,
    log_z_exact: Option<f64>,
) -> Result<PartitionEstimate> {
    if stats.total_resets == 0 || stats.n_trajectories == 0 {
        return Err(DgsError::Invariant("ensemble recorded no resets".into()));
    }
    let p = stats.n_trajectories as f64 / stats.total_resets as f64;
    let log_z_hat =
        (dim as f64).ln() + beta * kappa * (2.0 * m as f64 - 1.0) + p.ln();
    let rel_error = log_z_exact.map(|lz| (log_z_hat - lz).exp_m1().abs());
    Ok(PartitionEstimate {
        log_z_hat,
        log_z_exact,
        rel_error,
        stat_error: ((1.0 - p) / stats.n_trajectories as f64).sqrt(),
        bound: constants().partition_error * product_error_scale(beta, epsilon, kappa, m),
        runs_over_resets: p,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartitionInversion {
    /// `2 D cosh(lambda) e^{-beta kappa / eps} p - e^{-2 beta kappa / eps} tr e^{beta H}`
    pub z: f64,
    pub leading: f64,
    pub correction: f64,
}

/// Solves the ideal-form identity
/// `p = (e^{beta kappa/eps} Z + e^{-beta kappa/eps} tr e^{beta H}) / (2 D cosh lambda)`
/// for `Z`, given the stop probability `p` and `log tr e^{beta H}`.
pub fn partition_exact_inversion(
    sample_prob: f64,
    beta: f64,
    kappa: f64,
    epsilon: f64,
    m: usize,
    dim: usize,
    log_trace_exp_plus: f64,
) -> Result<PartitionInversion> {
    if !(sample_prob > 0.0 && sample_prob <= 1.0) {
        return Err(DgsError::param("sample_prob", sample_prob, "must lie in (0, 1]"));
    }
    let lambda = lambda_param(beta, kappa, epsilon, m)?;
    let a = beta * kappa / epsilon;
    let leading = (LN_2 + (dim as f64).ln() + log_cosh(lambda) - a + sample_prob.ln()).exp();
    let correction = (-2.0 * a + log_trace_exp_plus).exp();
    Ok(PartitionInversion {
        z: leading - correction,
        leading,
        correction,
    })
}

/// Mean and standard error of `tr(O rho_final)` over the ensemble.
pub fn estimate_observable(stats: &EnsembleStats, observable: &DenseOperator) -> Result<(f64, f64)> {
    let rec = stats
        .observables
        .iter()
        .find(|m| m.observable.dim() == observable.dim() && m.observable.max_abs_diff(observable) <= 1e-12);
    match rec {
        Some(m) => {
            let n = m.count as f64;
            let stderr = if m.count > 1 {
                (m.m2.max(0.0) / (n - 1.0) / n).sqrt()
            } else {
                0.0
            };
            Ok((m.mean, stderr))
        }
        None => {
            if let Some(first) = stats.observables.first() {
                if first.observable.dim() != observable.dim() {
                    return Err(DgsError::DimensionMismatch {
                        expected: first.observable.dim(),
                        got: observable.dim(),
                    });
                }
            }
            Err(DgsError::Invariant(
                "observable was not recorded by the ensemble".into(),
            ))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Inequality {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl Inequality {
    fn le(lhs: f64, rhs: f64) -> Self {
        Self { lhs, rhs, holds: lhs <= rhs }
    }

    fn ge(lhs: f64, rhs: f64) -> Self {
        Self { lhs, rhs, holds: lhs >= rhs }
    }
}

/// The three perturbation inequalities, every side divided by `cosh(lambda)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaChecks {
    pub state: Inequality,
    pub trace: Inequality,
    pub normalization: Inequality,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaultReport {
    pub noise: NoiseModel,
    pub lambda: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    pub delta_lower: f64,
    pub delta_upper: f64,
    pub state_distance: f64,
    /// `C delta beta kappa / eps min(D, e^{2 beta kappa})` with the calibrated `C`.
    pub bound_value: f64,
    pub bound_constant: f64,
    /// The explicit bound before dropping subleading terms:
    /// `lambda delta / sqrt(mu_max + delta) min{D sinh(x)/cosh(lambda sqrt(mu_max)), sinh(x)/cosh(lambda sqrt(mu_min))}`
    /// with `x = lambda sqrt(mu_max + delta)`.
    pub explicit_bound: f64,
    pub threshold: f64,
    pub threshold_ok: bool,
    pub lemma: LemmaChecks,
}

fn log_sinh(x: f64) -> f64 {
    x + (-(-2.0 * x).exp_m1()).ln() - LN_2
}

/// Fault experiment on the product-form instrument of `h`.
pub fn fault_resilience_experiment(
    h: &LocalHamiltonian,
    epsilon: f64,
    beta: f64,
    noise: &NoiseModel,
    delta_trials: usize,
) -> Result<FaultReport> {
    let inst = build_k_product(h, epsilon)?;
    fault_resilience_for(&inst, beta, noise, delta_trials)
}

/// Compares `E[rho'_tau]` (series over the perturbed `E0'`, no closed form) with
/// `E[rho_tau]` (closed form) for the instrument `inst`.
pub fn fault_resilience_for(
    inst: &Instrument,
    beta: f64,
    noise: &NoiseModel,
    delta_trials: usize,
) -> Result<FaultReport> {
    let (kappa, m, eps, d) = (inst.kappa(), inst.m(), inst.epsilon(), inst.dim());
    let lambda = lambda_param(beta, kappa, eps, m)?;
    let sched = cosh_schedule_auto(lambda)?;
    let pert = perturb_instrument(inst, noise)?;
    let delta = pert.delta_upper;
    let (delta_lower, _) =
        channel_delta_estimate(inst, pert.channel.as_ref(), delta, delta_trials, noise.seed)?;

    let rho0 = DenseOperator::maximally_mixed(d);
    let clean = expected_state_closed(inst, lambda)?;
    let noisy = expected_state_series(pert.channel.as_ref(), &sched, &rho0, 1e-12)?;
    let state_distance = trace_norm(&noisy.sub(&clean));

    // sum_n lambda^{2n}/(2n)! E^n(I/D) / cosh(lambda) = sum_n w_n E^n(I/D)
    let n_terms = sched.horizon();
    let s_clean = weighted_orbit_sum(inst, &sched, &rho0, n_terms)?;
    let s_noisy = weighted_orbit_sum(pert.channel.as_ref(), &sched, &rho0, n_terms)?;
    let diff = s_clean.sub(&s_noisy);

    let (mu_min, mu_max) = (inst.mu_min(), inst.mu_max());
    let lc = log_cosh(lambda);
    let x = lambda * (mu_max + delta).sqrt();
    let perturbed_rhs = if delta == 0.0 || lambda == 0.0 {
        0.0
    } else {
        ((lambda * delta / (2.0 * (mu_max + delta).sqrt())).ln() + log_sinh(x) - lc).exp()
    };
    let norm_rhs = ((log_cosh(lambda * mu_max.sqrt()) - (d as f64).ln())
        .max(log_cosh(lambda * mu_min.sqrt()))
        - lc)
        .exp();
    let lemma = LemmaChecks {
        state: Inequality::le(trace_norm(&diff), perturbed_rhs),
        trace: Inequality::le(diff.real_trace().abs(), perturbed_rhs),
        normalization: Inequality::ge(log_sample_probability(inst, lambda).exp(), norm_rhs),
    };

    let c = constants().fault;
    let bound_value =
        c * delta * beta * kappa / eps * (d as f64).min((2.0 * beta * kappa).exp());
    let explicit_bound = if delta == 0.0 || lambda == 0.0 {
        0.0
    } else {
        let pre = (lambda * delta / (mu_max + delta).sqrt()).ln() + log_sinh(x);
        let a = (d as f64).ln() - log_cosh(lambda * mu_max.sqrt());
        let b = -log_cosh(lambda * mu_min.sqrt());
        (pre + a.min(b)).exp()
    };
    let threshold = if beta * kappa > 0.0 { eps / (beta * kappa) } else { f64::INFINITY };
    Ok(FaultReport {
        noise: *noise,
        lambda,
        mu_min,
        mu_max,
        delta_lower,
        delta_upper: delta,
        state_distance,
        bound_value,
        bound_constant: c,
        explicit_bound,
        threshold,
        threshold_ok: delta < threshold,
        lemma,
    })
}

/// `|| E[rho_tau] - rho_G ||_1` for an instrument and its Hamiltonian.
pub fn gibbs_distance(inst: &Instrument, h: &LocalHamiltonian, beta: f64) -> Result<f64> {
    let lambda = lambda_param(beta, h.kappa(), inst.epsilon(), h.m())?;
    let rho = expected_state_closed(inst, lambda)?;
    let gibbs = crate::hamiltonian::exact_gibbs(h, beta)?.gibbs_state;
    Ok(trace_norm(&rho.sub(&gibbs)))
}

/// `tr E0'(rho)` is trace-checked per noise model; helper used by reports.
pub fn channel_summary(channel: &dyn Channel) -> String {
    channel.label()
}
