//! Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Tolerances are pinned below.

mod common;

use std::process::Command as Process;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use common::{log_log_slope, reference, suite, write_config, BETAS, EPSILONS};
use dgs_cli::{load, run, Command, Overrides, RunOptions};
use dgs_core::calibration::constants;
use dgs_core::engine::{
    expected_state_closed, expected_state_series, expected_stopping_time_exact,
    expected_stopping_time_series, run_ensemble, sample_probability, tau_max_bound,
    EnsembleOptions,
};
use dgs_core::estimators::{
    estimate_partition, fault_resilience_experiment, partition_exact_inversion,
    product_error_scale,
};
use dgs_core::hamiltonian::{exact_gibbs, exact_partition, log_trace_exp};
use dgs_core::instrument::{build_k_ideal, build_k_product, k_deviation};
use dgs_core::noise::{NoiseKind, NoiseModel};
use dgs_core::operator::{eig_h, trace_norm, DenseOperator};
use dgs_core::stopping::{cosh_schedule_auto, general_schedule, lambda_param};

const EXACT_SLACK: f64 = 1e-10;
const AGREEMENT_TOL: f64 = 1e-8;
const SIGMAS: f64 = 4.0;

const C1_RUNTIME: Duration = Duration::from_secs(1);
const C2_RUNTIME: Duration = Duration::from_secs(60);
const C3_BETA: f64 = 0.5;
const C3_EPSILONS: [f64; 4] = [0.08, 0.04, 0.02, 0.01];
const C3_SLOPE: (f64, f64) = (1.0, 0.2);
const C3_CONSTANT: f64 = 5.0;
const C4_SANDWICH_TOL: f64 = 1e-12;
const C4_SLOPE: (f64, f64) = (2.0, 0.1);
// the slope is an eps -> 0 statement; over [0.01, 0.1] the O(eps^3) terms pull
// it down to about 1.7 on six-term instances
const C4_DECADE_TOP: f64 = 0.01;
const C6_TRAJECTORIES: u64 = 100_000;
const C6_RUNTIME: Duration = Duration::from_secs(120);
const C6_MIN_EXPECTED: f64 = 25.0;
const C7_TRAJECTORIES: u64 = 1_000_000;
const C7_BETA: f64 = 0.5;
const C7_EPSILON: f64 = 0.02;
const C7_CONSTANT: f64 = 5.0;
const C7_INVERSION_TOL: f64 = 1e-9;
const C7_RUNTIME: Duration = Duration::from_secs(20 * 60);
const C8_RATIO_TOL: f64 = 1e-12;
const C9_STRENGTHS: [f64; 3] = [1e-4, 2e-4, 4e-4];
const C9_SLOPE: (f64, f64) = (1.0, 0.15);
const MC_BETA: f64 = 0.5;
const MC_EPSILON: f64 = 0.05;

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sci(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn within(x: f64, (center, tol): (f64, f64)) -> bool {
    (x - center).abs() <= tol
}

fn runtime_ok(elapsed: Duration, limit: Duration, detail: String) -> Verdict {
    check(
        elapsed <= limit,
        format!("{detail}; runtime {:.2}s (limit {}s)", elapsed.as_secs_f64(), limit.as_secs()),
    )
}

fn field(report: &[u8], path: &[&str]) -> Value {
    let v: Value = serde_json::from_slice(report).unwrap();
    path.iter().fold(v, |acc, k| acc[*k].clone())
}

fn c1_beta_zero() -> Verdict {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut failures = Vec::new();
    for (i, h) in std::iter::once(reference()).chain(suite().into_iter().take(3)).enumerate() {
        let path = write_config(
            dir.path(),
            &h,
            json!({"beta": 0.0, "epsilon": 0.05, "n_trajectories": 5000, "master_seed": 3}),
        );
        let cfg = load(&path, &Overrides::default()).unwrap();
        let exp = run(Command::Expected, &cfg, &RunOptions::default()).unwrap();
        let smp = run(Command::Sample, &cfg, &RunOptions::default()).unwrap();
        let tau_exact = field(&exp.json, &["results", "expected_tau_exact"]).as_f64();
        let tau_series = field(&exp.json, &["results", "expected_tau_series"]).as_f64();
        let mean = field(&smp.json, &["results", "mean_tau"]).as_f64();
        let se = field(&smp.json, &["results", "tau_stderr"]).as_f64();
        if tau_exact != Some(1.0) || tau_series != Some(1.0) || mean != Some(1.0) || se != Some(0.0) {
            failures.push(format!(
                "instance {i}: exact {tau_exact:?} series {tau_series:?} mean {mean:?} stderr {se:?}"
            ));
        }
    }
    if !failures.is_empty() {
        return Err(failures.join("; "));
    }
    runtime_ok(
        start.elapsed(),
        C1_RUNTIME,
        "E[tau] = 1 and mean_tau = 1 with zero spread on 4 instances".into(),
    )
}

fn c2_closed_vs_series() -> Verdict {
    let start = Instant::now();
    let (mut worst_state, mut worst_tau) = (0.0f64, 0.0f64);
    for h in suite() {
        let rho0 = DenseOperator::maximally_mixed(h.dim());
        for &eps in &EPSILONS {
            let inst = build_k_product(&h, eps).unwrap();
            for &beta in &BETAS {
                let lambda = lambda_param(beta, h.kappa(), eps, h.m()).unwrap();
                let sched = cosh_schedule_auto(lambda).unwrap();
                let closed = expected_state_closed(&inst, lambda).unwrap();
                let series = expected_state_series(&inst, &sched, &rho0, 1e-12).unwrap();
                worst_state = worst_state.max(trace_norm(&closed.sub(&series)));
                let te = expected_stopping_time_exact(&inst, lambda);
                let ts = expected_stopping_time_series(&inst, &sched, &rho0).unwrap();
                worst_tau = worst_tau.max((te - ts).abs() / te);
            }
        }
    }
    let detail = format!(
        "180 cases: max state gap {worst_state:.3e}, max E[tau] rel gap {worst_tau:.3e} (tol {AGREEMENT_TOL:e})"
    );
    if worst_state > AGREEMENT_TOL || worst_tau > AGREEMENT_TOL {
        return Err(detail);
    }
    runtime_ok(start.elapsed(), C2_RUNTIME, detail)
}

fn c3_gibbs_scaling() -> Verdict {
    let h = reference();
    let oracle = exact_gibbs(&h, C3_BETA).unwrap().gibbs_state;
    let mut dists = Vec::new();
    let mut ratios = Vec::new();
    for &eps in &C3_EPSILONS {
        let inst = build_k_product(&h, eps).unwrap();
        let lambda = lambda_param(C3_BETA, h.kappa(), eps, h.m()).unwrap();
        let d = trace_norm(&expected_state_closed(&inst, lambda).unwrap().sub(&oracle));
        dists.push(d);
        ratios.push(d / product_error_scale(C3_BETA, eps, h.kappa(), h.m()));
    }
    let slope = log_log_slope(&C3_EPSILONS, &dists);
    let fitted = ratios.iter().cloned().fold(0.0, f64::max);
    check(
        within(slope, C3_SLOPE) && fitted <= C3_CONSTANT,
        format!(
            "distances {}, slope {slope:.4} (want {} +- {}), fitted constant {fitted:.4} (limit {C3_CONSTANT})",
            sci(&dists),
            C3_SLOPE.0, C3_SLOPE.1
        ),
    )
}

fn c4_sandwich_and_deviation() -> Verdict {
    let mut worst_excess = 0.0f64;
    let mut slopes = Vec::new();
    let sweep: Vec<f64> = (0..4).map(|j| C4_DECADE_TOP * 10f64.powf(-(j as f64) / 3.0)).collect();
    for h in suite() {
        let m = h.m();
        for &eps in &EPSILONS {
            let inst = build_k_product(&h, eps).unwrap();
            let lo = (1.0 - eps).powi(2 * m as i32);
            let hi = (1.0 - (m as f64 - 1.0) * eps / m as f64).powi(2 * m as i32);
            for &x in inst.spectrum().eigenvalues() {
                worst_excess = worst_excess.max(lo - x).max(x - hi);
            }
        }
        let dev: Vec<f64> = sweep.iter().map(|&e| k_deviation(&h, e).unwrap()).collect();
        slopes.push(log_log_slope(&sweep, &dev));
    }
    let (smin, smax) = slopes
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| (a.min(s), b.max(s)));
    check(
        worst_excess <= C4_SANDWICH_TOL && slopes.iter().all(|&s| within(s, C4_SLOPE)),
        format!(
            "max sandwich excess {worst_excess:.3e} (tol {C4_SANDWICH_TOL:e}); deviation slopes in [{smin:.4}, {smax:.4}] (want {} +- {})",
            C4_SLOPE.0, C4_SLOPE.1
        ),
    )
}

fn c5_stopping_bound() -> Verdict {
    let mut violations = Vec::new();
    let mut worst = 0.0f64;
    for (i, h) in suite().iter().enumerate() {
        for &eps in &EPSILONS {
            let inst = build_k_product(h, eps).unwrap();
            for &beta in &BETAS {
                let lambda = lambda_param(beta, h.kappa(), eps, h.m()).unwrap();
                let t = expected_stopping_time_exact(&inst, lambda);
                let b = tau_max_bound(eps, h.m(), lambda).unwrap();
                let tight = b.tight.unwrap_or(b.coarse);
                worst = worst.max(t / tight);
                if t > tight * (1.0 + EXACT_SLACK) || tight > b.coarse * (1.0 + EXACT_SLACK) {
                    violations.push(format!("instance {i} eps {eps} beta {beta}: {t} / {tight} / {}", b.coarse));
                }
            }
        }
    }
    check(
        violations.is_empty(),
        if violations.is_empty() {
            format!("180 cases: E[tau] <= tight <= coarse, max E[tau]/tight = {worst:.4}")
        } else {
            violations.join("; ")
        },
    )
}

fn c6_monte_carlo() -> Verdict {
    let start = Instant::now();
    let h = reference();
    let inst = build_k_product(&h, MC_EPSILON).unwrap();
    let lambda = lambda_param(MC_BETA, h.kappa(), MC_EPSILON, h.m()).unwrap();
    let sched = cosh_schedule_auto(lambda).unwrap();
    let stats = run_ensemble(
        Arc::new(inst.clone()),
        Arc::new(sched.clone()),
        &EnsembleOptions::new(C6_TRAJECTORIES, 0xacce_0006),
    )
    .unwrap();
    let n = stats.n_trajectories as f64;

    let exact_tau = expected_stopping_time_exact(&inst, lambda);
    let z_tau = (stats.mean_tau - exact_tau) / stats.tau_stderr;

    let p = sample_probability(&inst, lambda);
    let p_sigma = p * ((1.0 - p) / n).sqrt();
    let z_p = (stats.runs_over_resets - p) / p_sigma;

    // per run, stopping at level k has probability r_k R_k tr K^{2k} / D; a
    // trajectory's stop level follows that law conditioned on stopping
    let ext = sched.extended(stats.stop_level_counts.len().max(sched.horizon()));
    let mut checked = 0;
    let mut worst_z = 0.0f64;
    for (k, &count) in stats.stop_level_counts.iter().enumerate() {
        let q = ext.weights()[k] * inst.zero_run_probability(k) / p;
        let expected = n * q;
        if expected < C6_MIN_EXPECTED {
            continue;
        }
        checked += 1;
        worst_z = worst_z.max((count as f64 - expected).abs() / (n * q * (1.0 - q)).sqrt());
    }
    let detail = format!(
        "mean_tau {:.4} vs {exact_tau:.4} ({z_tau:+.2} se); runs/resets {:.6} vs {p:.6} ({z_p:+.2} sigma); {checked} levels, max |z| {worst_z:.2}",
        stats.mean_tau, stats.runs_over_resets
    );
    if z_tau.abs() > SIGMAS || z_p.abs() > SIGMAS || worst_z > SIGMAS || checked == 0 {
        return Err(detail);
    }
    runtime_ok(start.elapsed(), C6_RUNTIME, detail)
}

fn c7_partition() -> Verdict {
    let start = Instant::now();
    let h = reference();
    let inst = build_k_product(&h, C7_EPSILON).unwrap();
    let lambda = lambda_param(C7_BETA, h.kappa(), C7_EPSILON, h.m()).unwrap();
    let stats = run_ensemble(
        Arc::new(inst),
        Arc::new(cosh_schedule_auto(lambda).unwrap()),
        &EnsembleOptions::new(C7_TRAJECTORIES, 0xacce_0007),
    )
    .unwrap();
    let log_z = exact_partition(&h, C7_BETA).unwrap();
    let est = estimate_partition(&stats, C7_BETA, C7_EPSILON, h.kappa(), h.m(), h.dim(), Some(log_z))
        .unwrap();
    let rel = est.rel_error.unwrap();
    let allowed = C7_CONSTANT * product_error_scale(C7_BETA, C7_EPSILON, h.kappa(), h.m())
        + SIGMAS * est.stat_error;

    let ideal = build_k_ideal(&h, C7_EPSILON).unwrap();
    let p = sample_probability(&ideal, lambda);
    let spectrum = eig_h(&h.to_dense().unwrap()).unwrap();
    let inv = partition_exact_inversion(
        p,
        C7_BETA,
        h.kappa(),
        C7_EPSILON,
        h.m(),
        h.dim(),
        log_trace_exp(&spectrum, -C7_BETA),
    )
    .unwrap();
    let inv_rel = (inv.z / log_z.exp() - 1.0).abs();
    let detail = format!(
        "|Z_hat/Z - 1| = {rel:.4e} (allowed {allowed:.4e}, stat {:.2e}); inversion rel error {inv_rel:.2e} (tol {C7_INVERSION_TOL:e})",
        est.stat_error
    );
    if rel > allowed || inv_rel > C7_INVERSION_TOL {
        return Err(detail);
    }
    runtime_ok(start.elapsed(), C7_RUNTIME, detail)
}

fn c8_general_schedules() -> Verdict {
    // cosh coefficients a_n = lambda^{2n}/(2n)! with c = 1/cosh(lambda)
    let lambda: f64 = 4.5;
    let cosh = cosh_schedule_auto(lambda).unwrap();
    let mut a = Vec::new();
    let mut term = 1.0;
    for n in 0..cosh.horizon() + 60 {
        a.push(term);
        term *= lambda * lambda / (((2 * n + 1) * (2 * n + 2)) as f64);
    }
    let general = general_schedule(&a, Some(1.0 / lambda.cosh())).unwrap();
    let worst_r = (0..cosh.horizon())
        .map(|n| {
            let (x, y) = (cosh.stop_probs()[n], general.stop_probs()[n]);
            (x - y).abs() / x.max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max);

    // truncated even series with coefficients 1/(n+1)^2 on the reference instance
    let h = reference();
    let inst = build_k_product(&h, 0.05).unwrap();
    let coeffs: Vec<f64> = (0..40).map(|n| 1.0 / ((n + 1) as f64).powi(2)).collect();
    let total: f64 = coeffs.iter().sum();
    let sched = general_schedule(&coeffs, None).unwrap();
    let rho0 = DenseOperator::maximally_mixed(h.dim());
    let series = expected_state_series(&inst, &sched, &rho0, 1e-12).unwrap();
    let mut direct = DenseOperator::zeros(h.dim());
    let mut kn = DenseOperator::identity(h.dim());
    for &an in &coeffs {
        let term = kn.matmul(&rho0).matmul(&kn);
        direct.add_scaled_mut(an / total, &term);
        kn = kn.matmul(inst.k());
    }
    let direct = direct.scale(1.0 / direct.real_trace());
    let gap = trace_norm(&series.sub(&direct));
    check(
        worst_r <= C8_RATIO_TOL && gap <= AGREEMENT_TOL,
        format!(
            "max r_n rel gap {worst_r:.3e} (tol {C8_RATIO_TOL:e}); truncated-series state gap {gap:.3e} (tol {AGREEMENT_TOL:e})"
        ),
    )
}

fn c9_fault_resilience() -> Verdict {
    let h = reference();
    let c = constants().fault;
    let mut dists = Vec::new();
    let mut problems = Vec::new();
    let mut worst_ratio = 0.0f64;
    for &p in &C9_STRENGTHS {
        let noise = NoiseModel {
            kind: NoiseKind::DepolarizeAfter,
            strength: p,
            seed: 9,
        };
        let r = fault_resilience_experiment(&h, MC_EPSILON, MC_BETA, &noise, 64).unwrap();
        dists.push(r.state_distance);
        if !(r.lemma.state.holds && r.lemma.trace.holds && r.lemma.normalization.holds) {
            problems.push(format!("p {p}: lemma {:?}", r.lemma));
        }
        if r.threshold_ok {
            worst_ratio = worst_ratio.max(r.state_distance / r.bound_value);
            if r.state_distance > r.bound_value {
                problems.push(format!("p {p}: distance {} > bound {}", r.state_distance, r.bound_value));
            }
        }
    }
    let slope = log_log_slope(&C9_STRENGTHS, &dists);
    if !within(slope, C9_SLOPE) {
        problems.push(format!("slope {slope:.4}"));
    }
    let detail = format!(
        "distances {}, slope {slope:.4} (want {} +- {}); lemma holds; distance/bound <= {worst_ratio:.3} with calibrated constant {c}",
        sci(&dists),
        C9_SLOPE.0, C9_SLOPE.1
    );
    if problems.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", problems.join("; ")))
    }
}

fn c10_determinism() -> Verdict {
    let bin = env!("CARGO_BIN_EXE_dgs");
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &reference(),
        json!({
            "beta": MC_BETA, "epsilon": MC_EPSILON, "n_trajectories": 20000, "master_seed": 10,
            "track_state": true, "output_format": "csv",
            "noise": {"kind": "kraus_perturbation", "strength": 0.001, "seed": 4}
        }),
    );
    let mut compared = 0;
    for cmd in ["validate", "sample", "expected", "partition", "noise"] {
        let mut outputs = Vec::new();
        for (tag, workers) in [("a", 1), ("b", 1), ("c", 8)] {
            let out = dir.path().join(format!("{cmd}-{tag}.json"));
            let status = Process::new(bin)
                .args([cmd, "--config"])
                .arg(&cfg)
                .args(["--workers", &workers.to_string(), "--output"])
                .arg(&out)
                .status()
                .unwrap();
            if !status.success() {
                return Err(format!("{cmd} exited with {status}"));
            }
            let mut bytes = std::fs::read(&out).unwrap();
            let csv = dgs_cli::csv_path(&out);
            if csv.exists() {
                bytes.extend(std::fs::read(csv).unwrap());
            }
            outputs.push(bytes);
        }
        if outputs.windows(2).any(|w| w[0] != w[1]) {
            return Err(format!("{cmd}: outputs differ across runs or worker counts"));
        }
        compared += 1;
    }
    Ok(format!("{compared} subcommands byte-identical over 2 runs at 1 worker and 1 run at 8 workers"))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Verdict); 10] = [
        (1, "beta = 0 identity", c1_beta_zero),
        (2, "closed form vs series", c2_closed_vs_series),
        (3, "Gibbs convergence scaling", c3_gibbs_scaling),
        (4, "spectral sandwich and K deviation", c4_sandwich_and_deviation),
        (5, "stopping-time bound", c5_stopping_bound),
        (6, "Monte-Carlo consistency", c6_monte_carlo),
        (7, "partition estimator", c7_partition),
        (8, "general f(K) schedules", c8_general_schedules),
        (9, "fault resilience", c9_fault_resilience),
        (10, "determinism", c10_determinism),
    ];
    let mut failed = 0;
    for (id, name, f) in criteria {
        let start = Instant::now();
        let verdict = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(d) => println!("criterion {id:>2} PASS {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("criterion {id:>2} FAIL {name}: {d} [{secs:.1}s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
