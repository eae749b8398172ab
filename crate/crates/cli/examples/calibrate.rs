//! Regenerates the `fitted` section of `calibration.json`: the largest ratio
//! of measured error to its scale over the randomized suite.
//!
//! cargo run --release -p dgs-cli --example calibrate

#[path = "../tests/common/mod.rs"]
mod common;

use common::{reference, suite, BETAS, EPSILONS};
use dgs_core::engine::{expected_state_closed, sample_probability};
use dgs_core::estimators::{fault_resilience_experiment, product_error_scale};
use dgs_core::hamiltonian::{exact_gibbs, exact_partition, LocalHamiltonian};
use dgs_core::instrument::{build_k_product, k_deviation};
use dgs_core::noise::{NoiseKind, NoiseModel};
use dgs_core::operator::trace_norm;
use dgs_core::stopping::lambda_param;

fn main() {
    let mut instances = suite();
    instances.push(reference());
    let (mut gibbs, mut partition, mut dev, mut fault) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);

    for h in &instances {
        let m = h.m() as f64;
        for &eps in &EPSILONS {
            let inst = build_k_product(h, eps).unwrap();
            dev = dev.max(k_deviation(h, eps).unwrap() / (eps * eps * m * m));
            for &beta in &BETAS {
                let lambda = lambda_param(beta, h.kappa(), eps, h.m()).unwrap();
                let scale = product_error_scale(beta, eps, h.kappa(), h.m());
                let rho = expected_state_closed(&inst, lambda).unwrap();
                let d = trace_norm(&rho.sub(&exact_gibbs(h, beta).unwrap().gibbs_state));
                gibbs = gibbs.max(d / scale);
                let p = sample_probability(&inst, lambda);
                let log_hat =
                    (h.dim() as f64).ln() + beta * h.kappa() * (2.0 * m - 1.0) + p.ln();
                let bias = (log_hat - exact_partition(h, beta).unwrap()).exp_m1().abs();
                partition = partition.max(bias / scale);
            }
        }
    }

    // the suite has m >= 2; single-term instances saturate the K deviation ratio
    for (n, pauli) in [(1, "Z"), (1, "X"), (2, "XY"), (3, "ZZZ")] {
        let h = LocalHamiltonian::from_terms(n, &[(0.7, pauli)]).unwrap();
        for &eps in &EPSILONS {
            dev = dev.max(k_deviation(&h, eps).unwrap() / (eps * eps));
        }
    }

    let noises = [
        (NoiseKind::DepolarizeAfter, [1e-4, 2e-4, 4e-4]),
        (NoiseKind::KrausPerturbation, [2.5e-4, 5e-4, 1e-3]),
        (NoiseKind::HamiltonianPerturbation, [0.01, 0.02, 0.04]),
    ];
    for (i, h) in instances.iter().enumerate().filter(|(i, _)| i % 2 == 0 || *i == 20) {
        for &(beta, eps) in &[(0.2, 0.1), (0.5, 0.05), (1.0, 0.05)] {
            for (kind, strengths) in &noises {
                for &s in strengths {
                    let noise = NoiseModel { kind: *kind, strength: s, seed: i as u64 };
                    let r = fault_resilience_experiment(h, eps, beta, &noise, 8).unwrap();
                    if r.threshold_ok && r.delta_upper > 0.0 {
                        fault = fault.max(r.state_distance / (r.bound_value / r.bound_constant));
                    }
                }
            }
        }
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({
            "gibbs_error": gibbs,
            "partition_error": partition,
            "k_deviation": dev,
            "fault": fault,
        }))
        .unwrap()
    );
}
