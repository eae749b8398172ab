use proptest::prelude::*;

use dgs_core::engine::{expected_state_closed, expected_stopping_time_exact, tau_max_bound};
use dgs_core::estimators::{fault_resilience_experiment, gibbs_distance, gibbs_error_budget};
use dgs_core::hamiltonian::{exact_gibbs, exact_partition, jump_operator, random_pauli_hamiltonian};
use dgs_core::instrument::{apply_e0, build_k_product};
use dgs_core::noise::{NoiseKind, NoiseModel};
use dgs_core::operator::{
    channel_delta_estimate, eig_h, fidelity, operator_norm, random_pure_state,
    random_unit_hermitian, trace_norm, Channel, Cosh, DenseOperator,
};
use dgs_core::stopping::{cosh_schedule_auto, lambda_param};

fn instance() -> impl Strategy<Value = (usize, usize, u64)> {
    (2usize..=4, 2usize..=6, any::<u64>())
}

fn mixed_state(d: usize, seed: u64) -> DenseOperator {
    // convex combination of three random pure states
    let mut rho = DenseOperator::zeros(d);
    for (j, w) in [0.5, 0.3, 0.2].iter().enumerate() {
        rho.add_scaled_mut(*w, &DenseOperator::projector(&random_pure_state(d, seed.wrapping_add(j as u64))));
    }
    rho
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn eigendecomposition_reconstructs(d in 1usize..12, seed in any::<u64>()) {
        let a = random_unit_hermitian(d, seed).scale(3.7);
        let s = eig_h(&a).unwrap();
        let back = s.from_values(s.eigenvalues());
        prop_assert!(operator_norm(&back.sub(&a)) < 1e-10);
    }

    #[test]
    fn cosh_at_zero_is_identity(d in 1usize..10, seed in any::<u64>()) {
        let a = random_unit_hermitian(d, seed);
        let c = eig_h(&a).unwrap().apply(&Cosh(0.0), None).unwrap();
        prop_assert!(c.max_abs_diff(&DenseOperator::identity(d)) < 1e-14);
    }

    #[test]
    fn trace_norm_between_states_is_at_most_two(d in 2usize..10, s1 in any::<u64>(), s2 in any::<u64>()) {
        let rho = mixed_state(d, s1);
        let sigma = mixed_state(d, s2);
        let t = trace_norm(&rho.sub(&sigma));
        prop_assert!(t <= 2.0 + 1e-12);
        prop_assert!(trace_norm(&rho.sub(&rho)) < 1e-12);
    }

    #[test]
    fn fidelity_is_symmetric(d in 2usize..8, s1 in any::<u64>(), s2 in any::<u64>()) {
        let rho = mixed_state(d, s1);
        let sigma = mixed_state(d, s2);
        let f = fidelity(&rho, &sigma).unwrap();
        let g = fidelity(&sigma, &rho).unwrap();
        prop_assert!((f - g).abs() < 1e-10);
    }

    #[test]
    fn hamiltonian_constants((n, t, seed) in instance()) {
        let h = random_pauli_hamiltonian(n, t, seed).unwrap();
        let sum: f64 = h.terms().iter().map(|t| t.coefficient().abs()).sum();
        prop_assert_eq!(h.kappa(), sum);
        prop_assert!(operator_norm(&h.to_dense().unwrap()) <= h.kappa() * (1.0 + 1e-12));
        for term in h.terms() {
            let k = jump_operator(term, n).unwrap();
            let s = eig_h(&k).unwrap();
            prop_assert!(s.min() >= -1e-12 && s.max() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn partition_function_is_bracketed((n, t, seed) in instance(), beta in 0.0f64..2.0) {
        let h = random_pauli_hamiltonian(n, t, seed).unwrap();
        let log_z = exact_partition(&h, beta).unwrap();
        let log_d = (h.dim() as f64).ln();
        prop_assert!(log_z >= log_d - beta * h.kappa() - 1e-12);
        prop_assert!(log_z <= log_d + beta * h.kappa() + 1e-12);
    }

    #[test]
    fn product_k_is_hermitian_and_sandwiched((n, t, seed) in instance(), eps in 0.005f64..0.15) {
        let h = random_pauli_hamiltonian(n, t, seed).unwrap();
        let inst = build_k_product(&h, eps).unwrap();
        prop_assert!(inst.k().max_asymmetry() < 1e-12);
        let m = h.m() as i32;
        let lo = (1.0 - eps).powi(2 * m);
        let hi = (1.0 - (m as f64 - 1.0) * eps / m as f64).powi(2 * m);
        prop_assert!(inst.spectrum().min() >= lo - 1e-12);
        prop_assert!(inst.spectrum().max() <= hi + 1e-12);
    }

    #[test]
    fn instrument_is_complete((n, t, seed) in instance(), eps in 0.01f64..0.2, s in any::<u64>()) {
        let h = random_pauli_hamiltonian(n, t, seed).unwrap();
        let inst = build_k_product(&h, eps).unwrap();
        let rho = mixed_state(h.dim(), s);
        let (_, p0) = apply_e0(&inst, &rho).unwrap();
        let unnormalized = inst.apply(&rho);
        prop_assert!((unnormalized.real_trace() - p0).abs() < 1e-14);
        prop_assert!(p0 > 0.0 && p0 <= 1.0);
        prop_assert!(p0 >= inst.mu_min() - 1e-12 && p0 <= inst.mu_max() + 1e-12);
    }

    #[test]
    fn expected_tau_respects_bound((n, t, seed) in instance(), eps in 0.01f64..0.1, beta in 0.0f64..1.0) {
        let h = random_pauli_hamiltonian(n, t, seed).unwrap();
        let inst = build_k_product(&h, eps).unwrap();
        let lambda = lambda_param(beta, h.kappa(), eps, h.m()).unwrap();
        let tau = expected_stopping_time_exact(&inst, lambda);
        let b = tau_max_bound(eps, h.m(), lambda).unwrap();
        prop_assert!(tau >= 1.0 - 1e-12);
        prop_assert!(tau <= b.tight.unwrap() * (1.0 + 1e-10));
        prop_assert!(b.tight.unwrap() <= b.coarse * (1.0 + 1e-10));
    }

    #[test]
    fn delta_lower_never_exceeds_upper(seed in any::<u64>(), strength in 0.0f64..0.01) {
        let h = random_pauli_hamiltonian(2, 3, seed).unwrap();
        let inst = build_k_product(&h, 0.05).unwrap();
        let noise = NoiseModel { kind: NoiseKind::DepolarizeAfter, strength, seed };
        let pert = dgs_core::noise::perturb_instrument(&inst, &noise).unwrap();
        let (lo, hi) = channel_delta_estimate(&inst, pert.channel.as_ref(), pert.delta_upper, 16, seed).unwrap();
        prop_assert!(lo <= hi * (1.0 + 1e-12) + 1e-15);
    }
}

#[test]
fn delta_lower_bound_grows_with_trials() {
    let h = random_pauli_hamiltonian(2, 3, 5).unwrap();
    let inst = build_k_product(&h, 0.05).unwrap();
    let noise = NoiseModel {
        kind: NoiseKind::KrausPerturbation,
        strength: 0.01,
        seed: 2,
    };
    let pert = dgs_core::noise::perturb_instrument(&inst, &noise).unwrap();
    let mut last = 0.0;
    for trials in [1, 8, 64] {
        let (lo, _) = channel_delta_estimate(&inst, pert.channel.as_ref(), pert.delta_upper, trials, 3).unwrap();
        assert!(lo >= last, "{trials}: {lo} < {last}");
        last = lo;
    }
}

#[test]
fn gibbs_oracle_is_maximally_mixed_at_zero_beta() {
    let h = random_pauli_hamiltonian(3, 4, 8).unwrap();
    let g = exact_gibbs(&h, 0.0).unwrap();
    assert!(g.gibbs_state.max_abs_diff(&DenseOperator::maximally_mixed(8)) < 1e-15);
    assert_eq!(g.log_partition, 8f64.ln());
}

#[test]
fn budget_is_sound_on_random_instances() {
    for i in 0..12u64 {
        let h = random_pauli_hamiltonian(2 + (i % 3) as usize, 2 + (i % 5) as usize, 100 + i).unwrap();
        for &(beta, eps) in &[(0.2, 0.1), (0.5, 0.05), (1.0, 0.02)] {
            let inst = build_k_product(&h, eps).unwrap();
            let d = gibbs_distance(&inst, &h, beta).unwrap();
            let b = gibbs_error_budget(beta, eps, h.kappa(), h.m());
            assert!(d <= b.total, "instance {i} beta {beta} eps {eps}: {d} > {}", b.total);
        }
    }
}

#[test]
fn fault_bound_and_lemma_hold_for_every_noise_model() {
    let kinds = [
        (NoiseKind::DepolarizeAfter, 3e-4),
        (NoiseKind::KrausPerturbation, 1e-3),
        (NoiseKind::HamiltonianPerturbation, 0.05),
    ];
    for i in 0..6u64 {
        let h = random_pauli_hamiltonian(2 + (i % 2) as usize, 2 + (i % 3) as usize, 200 + i).unwrap();
        for &(kind, strength) in &kinds {
            let noise = NoiseModel { kind, strength, seed: i };
            let r = fault_resilience_experiment(&h, 0.05, 0.5, &noise, 16).unwrap();
            assert!(r.lemma.state.holds, "{kind:?} {i}: {:?}", r.lemma.state);
            assert!(r.lemma.trace.holds, "{kind:?} {i}: {:?}", r.lemma.trace);
            assert!(r.lemma.normalization.holds, "{kind:?} {i}: {:?}", r.lemma.normalization);
            if r.threshold_ok {
                assert!(
                    r.state_distance <= r.bound_value,
                    "{kind:?} {i}: {} > {}",
                    r.state_distance,
                    r.bound_value
                );
            }
        }
    }
}

#[test]
fn partition_bias_is_linear_in_epsilon() {
    // bias of Z_hat evaluated with the exact stop probability instead of samples
    let h = random_pauli_hamiltonian(2, 3, 17).unwrap();
    let beta = 0.5;
    let log_z = exact_partition(&h, beta).unwrap();
    let eps = [0.04, 0.02, 0.01, 0.005];
    let bias: Vec<f64> = eps
        .iter()
        .map(|&e| {
            let inst = build_k_product(&h, e).unwrap();
            let lambda = lambda_param(beta, h.kappa(), e, h.m()).unwrap();
            let p = dgs_core::engine::sample_probability(&inst, lambda);
            let log_hat = (h.dim() as f64).ln() + beta * h.kappa() * (2.0 * h.m() as f64 - 1.0) + p.ln();
            (log_hat - log_z).exp_m1().abs()
        })
        .collect();
    let lx: Vec<f64> = eps.iter().map(|e: &f64| e.ln()).collect();
    let ly: Vec<f64> = bias.iter().map(|b| b.ln()).collect();
    let slope = (ly[3] - ly[0]) / (lx[3] - lx[0]);
    assert!((slope - 1.0).abs() <= 0.2, "slope {slope}, bias {bias:?}");
}

#[test]
fn closed_form_state_is_a_density_matrix() {
    let h = random_pauli_hamiltonian(3, 5, 4).unwrap();
    let inst = build_k_product(&h, 0.03).unwrap();
    let lambda = lambda_param(0.8, h.kappa(), 0.03, h.m()).unwrap();
    let rho = expected_state_closed(&inst, lambda).unwrap();
    rho.check_density(1e-10).unwrap();
    let sched = cosh_schedule_auto(lambda).unwrap();
    assert!(sched.horizon() > 0);
}
