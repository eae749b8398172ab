//! Stopping schedules: the probability `r_n` of halting after a run of `n`
//! zero outcomes, the survival products `R_n = prod_{j<n} (1 - r_j)` and the
//! stop weights `w_n = r_n R_n`.
//!
//! The cosh schedule satisfies `r_{n+1} (1 - r_n) / r_n = lambda^2 / ((2n+1)(2n+2))`.
//! It is evaluated in log space through the tail quotients `rho_n = 1/r_n`,
//! so that `r_0 = 1/cosh(lambda)` may underflow without losing later terms.

use std::f64::consts::LN_2;

use serde::Serialize;

use crate::error::{DgsError, Result};

/// Target for the neglected weight mass beyond the cached horizon.
pub const TAIL_TARGET: f64 = 1e-12;

/// `lambda = beta kappa / (eps (1 - eps)^{2m-1})`.
pub fn lambda_param(beta: f64, kappa: f64, epsilon: f64, m: usize) -> Result<f64> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(DgsError::param("beta", beta, "must be finite and >= 0"));
    }
    if !(kappa > 0.0) {
        return Err(DgsError::param("kappa", kappa, "must be positive"));
    }
    check_epsilon(epsilon)?;
    if m == 0 {
        return Err(DgsError::param("m", 0.0, "must be at least 1"));
    }
    Ok(beta * kappa / (epsilon * (1.0 - epsilon).powi(2 * m as i32 - 1)))
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(DgsError::param("epsilon", epsilon, "must lie in (0, 1)"));
    }
    Ok(())
}

/// `log cosh x` without overflow.
pub fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - LN_2
}

/// `log(lambda^{2n} / (2n)!)`.
fn log_series_coeff(lambda: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    if lambda == 0.0 {
        return f64::NEG_INFINITY;
    }
    let log_fact: f64 = (1..=2 * n).map(|k| (k as f64).ln()).sum();
    2.0 * n as f64 * lambda.ln() - log_fact
}

fn ratio(lambda: f64, n: usize) -> f64 {
    let k = 2.0 * n as f64;
    lambda * lambda / ((k + 1.0) * (k + 2.0))
}

/// Upper bound on `sum_{j >= n} w_j` for the cosh schedule.
pub fn cosh_tail_bound(lambda: f64, n: usize) -> f64 {
    log_cosh_tail_bound(lambda, n).exp()
}

fn log_cosh_tail_bound(lambda: f64, n: usize) -> f64 {
    if lambda == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let q = ratio(lambda, n);
    if q >= 1.0 {
        return 0.0;
    }
    // terms beyond n shrink at least geometrically with ratio q_n
    (log_series_coeff(lambda, n) - log_cosh(lambda) - (-q).ln_1p()).min(0.0)
}

/// Smallest horizon `N` whose neglected tail `sum_{n >= N} w_n` is certified
/// below `target`.
pub fn cosh_horizon(lambda: f64, target: f64) -> usize {
    let mut n = 1;
    while cosh_tail_bound(lambda, n) >= target {
        n += 1;
    }
    n
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    Cosh { lambda: f64 },
    General { coefficients: Vec<f64>, c: f64 },
}

/// Cached prefix `n < horizon` of a stopping rule.
#[derive(Debug, Clone)]
pub struct StoppingSchedule {
    kind: ScheduleKind,
    stop: Vec<f64>,
    log_stop: Vec<f64>,
    survival: Vec<f64>,
    log_survival: Vec<f64>,
    weight: Vec<f64>,
}

/// Cosh schedule with `r_0 = 1/cosh(lambda)`, cached to `horizon` terms.
pub fn cosh_schedule(lambda: f64, horizon: usize) -> Result<StoppingSchedule> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(DgsError::param("lambda", lambda, "must be finite and >= 0"));
    }
    if horizon == 0 || cosh_tail_bound(lambda, horizon) >= TAIL_TARGET {
        return Err(DgsError::HorizonInsufficient {
            requested: horizon,
            suggested: cosh_horizon(lambda, TAIL_TARGET),
        });
    }
    Ok(build_cosh(lambda, horizon))
}

/// Cosh schedule with the smallest horizon meeting [`TAIL_TARGET`].
pub fn cosh_schedule_auto(lambda: f64) -> Result<StoppingSchedule> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(DgsError::param("lambda", lambda, "must be finite and >= 0"));
    }
    Ok(build_cosh(lambda, cosh_horizon(lambda, TAIL_TARGET)))
}

/// `log rho_n` for `n in start..end`, where `rho_n = sum_{j >= n} a_j / a_n`
/// with `a_j = lambda^{2j}/(2j)!`, so that `r_n = 1/rho_n`.
///
/// The forward ratio recursion amplifies relative error by `1/(1 - r_n)` per
/// step once `r_n` nears one. The backward form `rho_n = 1 + q_n rho_{n+1}`
/// contracts it instead, so it is seeded far past both `end` and `lambda`.
fn cosh_log_rho(lambda: f64, start: usize, end: usize) -> Vec<f64> {
    if lambda == 0.0 {
        return vec![0.0; end - start];
    }
    let two_log_lambda = 2.0 * lambda.ln();
    let log_q = |n: usize| {
        let k = 2.0 * n as f64;
        two_log_lambda - ((k + 1.0) * (k + 2.0)).ln()
    };
    let far = end.max(lambda.ceil() as usize) + 48;
    let mut log_rho = -(-log_q(far).exp()).ln_1p();
    let mut out = vec![0.0; end - start];
    for n in (start..far).rev() {
        let x = log_q(n) + log_rho;
        // log(1 + e^x)
        log_rho = if x > 0.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() };
        if n < end {
            out[n - start] = log_rho;
        }
    }
    out
}

fn build_cosh(lambda: f64, horizon: usize) -> StoppingSchedule {
    let log_rho = cosh_log_rho(lambda, 0, horizon + 1);
    let two_log_lambda = if lambda > 0.0 { 2.0 * lambda.ln() } else { 0.0 };
    let mut stop = Vec::with_capacity(horizon);
    let mut log_stop = Vec::with_capacity(horizon);
    let mut survival = Vec::with_capacity(horizon);
    let mut log_survival = Vec::with_capacity(horizon);
    let mut weight = Vec::with_capacity(horizon);

    let mut big_r = 1.0f64;
    let mut log_big_r = 0.0f64;
    for n in 0..horizon {
        let log_r = if n == 0 { -log_cosh(lambda) } else { -log_rho[n] };
        let r = log_r.exp();
        // 1 - r_n = q_n rho_{n+1} / rho_n, which avoids cancellation near r_n = 1
        let log_one_minus = if lambda == 0.0 {
            f64::NEG_INFINITY
        } else if log_r < -1.0 {
            (-log_r.exp()).ln_1p()
        } else {
            let k = 2.0 * n as f64;
            (two_log_lambda - ((k + 1.0) * (k + 2.0)).ln() + log_rho[n + 1]
                + log_r)
                .min(0.0)
        };
        stop.push(r);
        log_stop.push(log_r);
        survival.push(big_r);
        log_survival.push(log_big_r);
        weight.push(r * big_r);

        big_r *= log_one_minus.exp();
        log_big_r += log_one_minus;
    }
    StoppingSchedule {
        kind: ScheduleKind::Cosh { lambda },
        stop,
        log_stop,
        survival,
        log_survival,
        weight,
    }
}

/// Schedule realizing `r_n R_n = c a_n` for a one-signed coefficient sequence.
/// `c` defaults to `1/A`, `A = sum a_n`, the fastest valid choice.
pub fn general_schedule(coefficients: &[f64], c: Option<f64>) -> Result<StoppingSchedule> {
    if coefficients.is_empty() {
        return Err(DgsError::InvalidSchedule("no coefficients given".into()));
    }
    if let Some((i, a)) = coefficients.iter().enumerate().find(|(_, a)| !a.is_finite()) {
        return Err(DgsError::InvalidSchedule(format!(
            "coefficient a_{i} = {a} is not finite"
        )));
    }
    let has_pos = coefficients.iter().any(|a| *a > 0.0);
    let has_neg = coefficients.iter().any(|a| *a < 0.0);
    if has_pos && has_neg {
        return Err(DgsError::InvalidSchedule(
            "coefficients must all be >= 0 or all be <= 0".into(),
        ));
    }
    if !has_pos && !has_neg {
        return Err(DgsError::InvalidSchedule("all coefficients are zero".into()));
    }
    let total: f64 = coefficients.iter().sum();
    if !total.is_finite() {
        return Err(DgsError::InvalidSchedule(format!(
            "coefficient sum diverges ({total})"
        )));
    }
    let c = c.unwrap_or(1.0 / total);
    if !c.is_finite() || c * total <= 0.0 {
        return Err(DgsError::param(
            "c",
            c,
            "must share the sign of the coefficients so that c a_n >= 0",
        ));
    }
    let ca = c * total;
    if ca > 1.0 + 1e-12 {
        return Err(DgsError::param(
            "c",
            c,
            format!("c * A = {ca} exceeds 1 (A = {total})"),
        ));
    }
    let slack = if (1.0 - ca).abs() < 1e-14 { 0.0 } else { (1.0 - ca).max(0.0) };

    let n_coef = coefficients.len();
    let mut suffix = vec![0.0; n_coef + 1];
    for i in (0..n_coef).rev() {
        suffix[i] = suffix[i + 1] + coefficients[i];
    }
    let mut stop = Vec::with_capacity(n_coef);
    let mut survival = Vec::with_capacity(n_coef);
    let mut weight = Vec::with_capacity(n_coef);
    let mut big_r = 1.0f64;
    for n in 0..n_coef {
        let denom = slack + c * suffix[n];
        let r = if denom <= 0.0 {
            1.0
        } else {
            (c * coefficients[n] / denom).clamp(0.0, 1.0)
        };
        stop.push(r);
        survival.push(big_r);
        weight.push(r * big_r);
        big_r *= 1.0 - r;
    }
    let log_stop = stop.iter().map(|r| r.ln()).collect();
    let log_survival = survival.iter().map(|r| r.ln()).collect();
    Ok(StoppingSchedule {
        kind: ScheduleKind::General {
            coefficients: coefficients.to_vec(),
            c,
        },
        stop,
        log_stop,
        survival,
        log_survival,
        weight,
    })
}

impl StoppingSchedule {
    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    pub fn lambda(&self) -> Option<f64> {
        match self.kind {
            ScheduleKind::Cosh { lambda } => Some(lambda),
            ScheduleKind::General { .. } => None,
        }
    }

    /// Number of cached terms.
    pub fn horizon(&self) -> usize {
        self.stop.len()
    }

    pub fn stop_probs(&self) -> &[f64] {
        &self.stop
    }

    pub fn survivals(&self) -> &[f64] {
        &self.survival
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    /// `log w_n`, finite even where `w_n` itself underflows.
    pub fn log_weight(&self, n: usize) -> Result<f64> {
        if n >= self.horizon() {
            return Err(DgsError::BeyondHorizon {
                n,
                horizon: self.horizon(),
            });
        }
        Ok(self.log_stop[n] + self.log_survival[n])
    }

    pub fn log_survival(&self, n: usize) -> Result<f64> {
        if n >= self.horizon() {
            return Err(DgsError::BeyondHorizon {
                n,
                horizon: self.horizon(),
            });
        }
        Ok(self.log_survival[n])
    }

    /// `(r_n, R_n, w_n)` for a cached index.
    pub fn stop_weight(&self, n: usize) -> Result<(f64, f64, f64)> {
        if n >= self.horizon() {
            return Err(DgsError::BeyondHorizon {
                n,
                horizon: self.horizon(),
            });
        }
        Ok((self.stop[n], self.survival[n], self.weight[n]))
    }

    /// `r_n` for any `n`, continuing the recursion past the cached horizon
    /// when needed.
    pub fn stop_prob_at(&self, n: usize) -> f64 {
        if n < self.horizon() {
            return self.stop[n];
        }
        match &self.kind {
            ScheduleKind::Cosh { lambda } => (-cosh_log_rho(*lambda, n, n + 1)[0]).exp(),
            ScheduleKind::General { .. } => self.general_tail_stop(),
        }
    }

    fn general_tail_stop(&self) -> f64 {
        // past the last coefficient a_n = 0: the rule never fires unless all
        // stop mass has already been spent
        match &self.kind {
            ScheduleKind::General { coefficients, c } => {
                let ca: f64 = c * coefficients.iter().sum::<f64>();
                if (1.0 - ca).abs() < 1e-14 {
                    1.0
                } else {
                    0.0
                }
            }
            ScheduleKind::Cosh { .. } => unreachable!(),
        }
    }

    /// Same rule cached to a longer horizon.
    pub fn extended(&self, horizon: usize) -> Self {
        if horizon <= self.horizon() {
            return self.clone();
        }
        match &self.kind {
            ScheduleKind::Cosh { lambda } => build_cosh(*lambda, horizon),
            ScheduleKind::General { .. } => {
                let mut out = self.clone();
                let r = self.general_tail_stop();
                let mut big_r = self.survival[self.horizon() - 1]
                    * (1.0 - self.stop[self.horizon() - 1]);
                for _ in self.horizon()..horizon {
                    out.stop.push(r);
                    out.log_stop.push(r.ln());
                    out.survival.push(big_r);
                    out.log_survival.push(big_r.ln());
                    out.weight.push(r * big_r);
                    big_r *= 1.0 - r;
                }
                out
            }
        }
    }

    /// Upper bound on the weight mass `sum_{j >= n} w_j`.
    pub fn weight_tail_bound(&self, n: usize) -> f64 {
        self.log_weight_tail_bound(n).exp()
    }

    /// `log` of [`Self::weight_tail_bound`].
    pub fn log_weight_tail_bound(&self, n: usize) -> f64 {
        match &self.kind {
            ScheduleKind::Cosh { lambda } => log_cosh_tail_bound(*lambda, n),
            ScheduleKind::General { coefficients, c } => {
                let rest: f64 = coefficients.iter().skip(n).sum();
                (c * rest).max(0.0).ln()
            }
        }
    }

    /// Upper bound on `sum_{j >= n} R_j`; infinite when the rule can keep
    /// running forever with positive probability.
    pub fn survival_tail_bound(&self, n: usize) -> f64 {
        self.log_survival_tail_bound(n).exp()
    }

    /// `log` of [`Self::survival_tail_bound`].
    pub fn log_survival_tail_bound(&self, n: usize) -> f64 {
        match &self.kind {
            ScheduleKind::Cosh { lambda } => {
                if *lambda == 0.0 {
                    return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
                }
                let q = ratio(*lambda, n);
                if q >= 1.0 {
                    return f64::INFINITY;
                }
                // sum_{j>=n} R_j = sum_{k>=n} (k - n + 1) w_k <= w_n / (1 - q)^2
                log_series_coeff(*lambda, n) - log_cosh(*lambda) - 2.0 * (-q).ln_1p()
            }
            ScheduleKind::General { coefficients, .. } => {
                let n_coef = coefficients.len();
                let ext = self.extended(n_coef + 1);
                let leftover = ext.survival[n_coef];
                if leftover > 0.0 && self.general_tail_stop() == 0.0 {
                    return f64::INFINITY;
                }
                let s: f64 = ext.survival.iter().skip(n).take(n_coef.saturating_sub(n)).sum();
                s.ln()
            }
        }
    }
}
