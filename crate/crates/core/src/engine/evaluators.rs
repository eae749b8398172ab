//! Deterministic evaluators of the stopped process.
//!
//! Series evaluators walk the zero-run orbit `rho_n = E0^n(rho0) / tr E0^n(rho0)`
//! and carry `log tr E0^n(rho0)` separately, so that neither tiny stop weights
//! nor tiny success probabilities underflow.

use std::borrow::Cow;

use serde::Serialize;

use crate::error::{DgsError, Result};
use crate::instrument::Instrument;
use crate::operator::{Channel, Cosh, DenseOperator};
use crate::stopping::{log_cosh, StoppingSchedule};

/// Distance from 1 below which `|k|` is treated with the series expansion of
/// the stopping-time quotient.
pub const NEAR_UNIT_THRESHOLD: f64 = 1e-6;

/// Hard cap on series terms.
pub const SERIES_MAX_TERMS: usize = 1_000_000;

const MIN_PROB: f64 = 1e-300;

/// `cosh(lambda K) / tr cosh(lambda K)`.
pub fn expected_state_closed(inst: &Instrument, lambda: f64) -> Result<DenseOperator> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(DgsError::param("lambda", lambda, "must be finite and >= 0"));
    }
    let shift = lambda * inst.mu_max().sqrt();
    let m = inst.spectrum().apply(&Cosh(lambda), Some(shift))?;
    let tr = m.real_trace();
    Ok(m.scale(1.0 / tr))
}

fn ln_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Normalized zero-run orbit of a channel.
struct Orbit<'a> {
    channel: &'a dyn Channel,
    state: DenseOperator,
    log_trace: f64,
}

impl<'a> Orbit<'a> {
    fn new(channel: &'a dyn Channel, rho0: &DenseOperator) -> Self {
        let tr = rho0.real_trace();
        Self {
            channel,
            state: rho0.scale(1.0 / tr),
            log_trace: tr.ln(),
        }
    }

    /// Advances one step; `false` once the orbit has no outcome-0 weight left.
    fn advance(&mut self) -> bool {
        let out = self.channel.apply(&self.state);
        let p = out.real_trace();
        if !(p >= MIN_PROB) {
            self.log_trace = f64::NEG_INFINITY;
            return false;
        }
        self.state = out.scale(1.0 / p);
        self.log_trace += p.ln();
        true
    }
}

fn ensure_horizon<'s>(sched: &mut Cow<'s, StoppingSchedule>, n: usize) {
    if n >= sched.horizon() {
        let grown = sched.extended((2 * sched.horizon()).max(n + 1));
        *sched = Cow::Owned(grown);
    }
}

fn check_rho0(channel: &dyn Channel, rho0: &DenseOperator) -> Result<()> {
    if rho0.dim() != channel.dim() {
        return Err(DgsError::DimensionMismatch {
            expected: channel.dim(),
            got: rho0.dim(),
        });
    }
    rho0.check_density(1e-8)
}

/// `sum_n w_n E0^n(rho0) / sum_n w_n tr E0^n(rho0)`, truncated once the
/// neglected tail is certified below `tol` in trace norm.
pub fn expected_state_series(
    channel: &dyn Channel,
    sched: &StoppingSchedule,
    rho0: &DenseOperator,
    tol: f64,
) -> Result<DenseOperator> {
    if !(tol >= 1e-14) {
        return Err(DgsError::param("tol", tol, "must be at least 1e-14"));
    }
    check_rho0(channel, rho0)?;
    let mut sched = Cow::Borrowed(sched);
    let mut orbit = Orbit::new(channel, rho0);
    let d = channel.dim();
    let mut acc = DenseOperator::zeros(d);
    let mut acc_trace = 0.0;
    let mut scale = f64::NEG_INFINITY;

    for n in 0..SERIES_MAX_TERMS {
        ensure_horizon(&mut sched, n);
        let lw = sched.log_weight(n)? + orbit.log_trace;
        if lw > f64::NEG_INFINITY {
            if lw > scale {
                let shrink = (scale - lw).exp();
                acc = acc.scale(shrink);
                acc_trace *= shrink;
                scale = lw;
            }
            let c = (lw - scale).exp();
            acc.add_scaled_mut(c, &orbit.state);
            acc_trace += c;
        }
        // ||sum_{j>n} w_j E0^j(rho0)||_1 <= tr E0^n(rho0) sum_{j>n} w_j, and the
        // normalized error is at most twice the unnormalized one over the trace
        let log_tail = sched.log_weight_tail_bound(n + 1) + orbit.log_trace;
        let certified = acc_trace > 0.0
            && 2.0 * (log_tail - scale - acc_trace.ln()).exp() < tol;
        if certified || !orbit.advance() {
            if !(acc_trace > 0.0) {
                return Err(DgsError::SeriesNotConverged(
                    "stop weights vanish on the orbit of rho0".into(),
                ));
            }
            return Ok(acc.scale(1.0 / acc_trace));
        }
    }
    Err(DgsError::SeriesNotConverged(format!(
        "expected state not certified within {SERIES_MAX_TERMS} terms"
    )))
}

/// `sum_{n < n_terms} w_n E0^n(rho0)`, unnormalized.
pub fn weighted_orbit_sum(
    channel: &dyn Channel,
    sched: &StoppingSchedule,
    rho0: &DenseOperator,
    n_terms: usize,
) -> Result<DenseOperator> {
    check_rho0(channel, rho0)?;
    let mut sched = Cow::Borrowed(sched);
    ensure_horizon(&mut sched, n_terms.saturating_sub(1));
    let mut acc = DenseOperator::zeros(channel.dim());
    let mut orbit = Orbit::new(channel, rho0);
    for n in 0..n_terms {
        let lw = sched.log_weight(n)? + orbit.log_trace;
        if lw > f64::NEG_INFINITY {
            acc.add_scaled_mut(lw.exp(), &orbit.state);
        }
        if !orbit.advance() {
            break;
        }
    }
    Ok(acc)
}

/// `E[tau] = sum_n R_n tr E0^n(rho0) / sum_n w_n tr E0^n(rho0)` with certified
/// relative truncation error below `1e-10`.
pub fn expected_stopping_time_series(
    channel: &dyn Channel,
    sched: &StoppingSchedule,
    rho0: &DenseOperator,
) -> Result<f64> {
    const REL_TOL: f64 = 1e-10;
    check_rho0(channel, rho0)?;
    let mu = channel.mu_max().min(1.0);
    if mu >= 1.0 && sched.log_survival_tail_bound(0).is_infinite() && sched.lambda().is_none() {
        return Err(DgsError::SeriesNotConverged(
            "schedule keeps running with positive probability and mu_max = 1".into(),
        ));
    }
    let mut sched = Cow::Borrowed(sched);
    let mut orbit = Orbit::new(channel, rho0);
    let mut log_num = f64::NEG_INFINITY;
    let mut log_den = f64::NEG_INFINITY;
    let log_geom = if mu < 1.0 { mu.ln() - (-mu).ln_1p() } else { f64::INFINITY };

    for n in 0..SERIES_MAX_TERMS {
        ensure_horizon(&mut sched, n + 1);
        log_num = ln_add(log_num, sched.log_survival(n)? + orbit.log_trace);
        log_den = ln_add(log_den, sched.log_weight(n)? + orbit.log_trace);

        // sum_{j>n} R_j tr_j <= tr_n min(sum_{j>n} R_j, R_{n+1} mu / (1 - mu))
        let num_tail = orbit.log_trace
            + sched
                .log_survival_tail_bound(n + 1)
                .min(sched.log_survival(n + 1)? + log_geom);
        let den_tail = orbit.log_trace + sched.log_weight_tail_bound(n + 1);
        let rel = (num_tail - log_num).exp() + (den_tail - log_den).exp();
        if (log_den > f64::NEG_INFINITY && rel < REL_TOL) || !orbit.advance() {
            if log_den == f64::NEG_INFINITY {
                return Err(DgsError::SeriesNotConverged(
                    "stop weights vanish on the orbit of rho0".into(),
                ));
            }
            return Ok((log_num - log_den).exp());
        }
    }
    Err(DgsError::SeriesNotConverged(format!(
        "stopping time not certified within {SERIES_MAX_TERMS} terms"
    )))
}

/// `(cosh(lambda) - k^2 cosh(lambda k)) / (1 - k^2)`, scaled by `e^{-lambda}`.
fn scaled_quotient(lambda: f64, k: f64) -> f64 {
    let a = k.abs().min(1.0);
    let h = 1.0 - a;
    let e2 = (-2.0 * lambda).exp();
    if h < NEAR_UNIT_THRESHOLD {
        let c = 0.5 * (1.0 + e2);
        let s = 0.5 * (1.0 - e2);
        let l = lambda;
        return c + 0.5 * l * s - h * l * (l * c + 3.0 * s) / 4.0
            + h * h * l * (2.0 * l * l * s + 9.0 * l * c + 3.0 * s) / 24.0;
    }
    // e^l - a^2 e^{l a} = -e^l expm1(2 ln a + l (a - 1))
    let first = if a == 0.0 {
        1.0
    } else {
        -(2.0 * (-h).ln_1p() - lambda * h).exp_m1()
    };
    let second = e2 - a * a * (-lambda * (1.0 + a)).exp();
    0.5 * (first + second) / (h * (1.0 + a))
}

/// `E[tau] = [cosh(lambda) tr 1/(1-K^2) - tr K^2 cosh(lambda K)/(1-K^2)] / tr cosh(lambda K)`
/// for the reset state `I/D`, evaluated eigenvalue by eigenvalue.
pub fn expected_stopping_time_exact(inst: &Instrument, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 1.0;
    }
    let eig = inst.spectrum().eigenvalues();
    let num: f64 = eig.iter().map(|&k| scaled_quotient(lambda, k)).sum();
    let den: f64 = eig
        .iter()
        .map(|&k| {
            let a = k.abs().min(1.0);
            0.5 * ((lambda * (a - 1.0)).exp() + (-lambda * (1.0 + a)).exp())
        })
        .sum();
    num / den
}

/// `log(tr cosh(lambda K) / (D cosh lambda))`.
pub fn log_sample_probability(inst: &Instrument, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let eig = inst.spectrum().eigenvalues();
    let d = eig.len() as f64;
    let s: f64 = eig
        .iter()
        .map(|&k| {
            let a = k.abs();
            0.5 * ((lambda * (a - 1.0)).exp() + (-lambda * (1.0 + a)).exp())
        })
        .sum();
    // cosh(lambda) e^{-lambda} = (1 + e^{-2 lambda}) / 2
    s.ln() - d.ln() - ((-2.0 * lambda).exp().ln_1p() - std::f64::consts::LN_2)
}

/// Probability that one attempt from a reset ends with the stop coin:
/// `tr cosh(lambda K) / (D cosh lambda)`.
pub fn sample_probability(inst: &Instrument, lambda: f64) -> f64 {
    log_sample_probability(inst, lambda).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauMaxBound {
    /// `None` for `m = 1`, where the upper spectral bound degenerates to 1.
    pub tight: Option<f64>,
    pub coarse: f64,
}

/// Upper bounds on `E[tau]` from the spectral window
/// `(1-eps)^{2m} <= K <= (1 - (m-1) eps / m)^{2m}`:
///
/// `tight = cosh(l)/cosh(l (1-eps)^{2m}) / (1 - (1-(m-1)eps/m)^{4m}) - (1-eps)^{4m} / (1 - (1-eps)^{4m})`
/// and `coarse = (6/eps) e^{2 l eps m}`.
pub fn tau_max_bound(epsilon: f64, m: usize, lambda: f64) -> Result<TauMaxBound> {
    crate::stopping::check_epsilon(epsilon)?;
    if m == 0 {
        return Err(DgsError::param("m", 0.0, "must be at least 1"));
    }
    if !(lambda >= 0.0) {
        return Err(DgsError::param("lambda", lambda, "must be >= 0"));
    }
    let mf = m as f64;
    let coarse = 6.0 / epsilon * (2.0 * lambda * epsilon * mf).exp();
    let tight = (m >= 2).then(|| {
        let lo = (1.0 - epsilon).powi(2 * m as i32);
        let hi = (1.0 - (mf - 1.0) * epsilon / mf).powi(2 * m as i32);
        let ratio = (log_cosh(lambda) - log_cosh(lambda * lo)).exp();
        ratio / (1.0 - hi * hi) - lo * lo / (1.0 - lo * lo)
    });
    Ok(TauMaxBound { tight, coarse })
}
