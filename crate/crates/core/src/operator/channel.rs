use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{eig_h, trace_norm, CMatrix, DenseOperator};
use crate::error::{DgsError, Result};

/// A completely positive, trace non-increasing map on D x D operators.
///
/// This is the only contract the trajectory engine and series evaluators need
/// from the measurement outcome 0 branch: apply the map and read off a trace.
pub trait Channel: Send + Sync + std::fmt::Debug {
    fn dim(&self) -> usize;

    /// Unnormalized image `E(rho)`.
    fn apply(&self, rho: &DenseOperator) -> DenseOperator;

    /// Upper bound on `tr E(rho) / tr rho` over positive `rho`.
    fn mu_max(&self) -> f64;

    /// Lower bound on `tr E(rho) / tr rho` over positive `rho`.
    fn mu_min(&self) -> f64;

    /// The single Hermitian Kraus operator, when the map is `rho -> K rho K`.
    fn kraus_operator(&self) -> Option<&DenseOperator> {
        None
    }

    fn label(&self) -> String;
}

/// `(E(rho) / tr E(rho), tr E(rho))`.
pub fn apply_normalized(channel: &dyn Channel, rho: &DenseOperator) -> Result<(DenseOperator, f64)> {
    let out = channel.apply(rho);
    let p = out.real_trace();
    if !(p >= 1e-300) {
        return Err(DgsError::DegenerateSupport { trace: p });
    }
    Ok((out.scale(1.0 / p), p))
}

fn gaussian_vector(d: usize, rng: &mut ChaCha8Rng) -> DVector<Complex64> {
    DVector::from_fn(d, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re, im)
    })
}

fn haar_state(d: usize, rng: &mut ChaCha8Rng) -> DVector<Complex64> {
    let v = gaussian_vector(d, rng);
    let n = v.norm();
    v.unscale(n)
}

/// Haar-random unit vector in C^d.
pub fn random_pure_state(d: usize, seed: u64) -> DVector<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    haar_state(d, &mut rng)
}

/// GUE-style random Hermitian matrix normalized to unit operator norm.
pub fn random_unit_hermitian(d: usize, seed: u64) -> DenseOperator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = CMatrix::from_fn(d, d, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex64::new(re, im)
    });
    let h = DenseOperator::hermitian_part(g);
    let norm = eig_h(&h).map(|s| s.max_abs()).unwrap_or(1.0);
    if norm > 0.0 {
        h.scale(1.0 / norm)
    } else {
        h
    }
}

fn difference_on(a: &dyn Channel, b: &dyn Channel, psi: &DVector<Complex64>) -> f64 {
    let rho = DenseOperator::projector(psi);
    trace_norm(&a.apply(&rho).sub(&b.apply(&rho)))
}

/// Lower bound on the induced 1-norm `||A - B||_1` obtained by maximizing
/// `||A(psi) - B(psi)||_1` over `trials` Haar-random pure states, followed by a
/// short hill climb from the best sample.
///
/// Sampling and refinement draw from separate streams of `seed`, so the sampled
/// maximum is nondecreasing in `trials`.
pub fn induced_norm_lower_bound(
    a: &dyn Channel,
    b: &dyn Channel,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(DgsError::ZeroTrials);
    }
    if a.dim() != b.dim() {
        return Err(DgsError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let d = a.dim();
    let mut sampler = ChaCha8Rng::seed_from_u64(seed);
    sampler.set_stream(0);
    let mut best_psi = haar_state(d, &mut sampler);
    let mut best = difference_on(a, b, &best_psi);
    for _ in 1..trials {
        let psi = haar_state(d, &mut sampler);
        let v = difference_on(a, b, &psi);
        if v > best {
            best = v;
            best_psi = psi;
        }
    }

    let mut climber = ChaCha8Rng::seed_from_u64(seed);
    climber.set_stream(1);
    let per_scale = (trials / 4).clamp(4, 64);
    for step in [0.3, 0.1, 0.03, 0.01] {
        for _ in 0..per_scale {
            let kick = gaussian_vector(d, &mut climber).scale(step);
            let cand = &best_psi + kick;
            let n = cand.norm();
            if n == 0.0 {
                continue;
            }
            let cand = cand.unscale(n);
            let v = difference_on(a, b, &cand);
            if v > best {
                best = v;
                best_psi = cand;
            }
        }
    }
    Ok(best)
}

/// Bracket `(lower, upper)` on the channel distance `||E0 - E0'||_1`.
///
/// The lower end is sampled (see [`induced_norm_lower_bound`]); the upper end is
/// the analytic bound supplied by the noise model that produced `perturbed`.
/// Reference and perturbed maps agreeing exactly yields `(0, upper)`.
pub fn channel_delta_estimate(
    reference: &dyn Channel,
    perturbed: &dyn Channel,
    delta_upper: f64,
    trials: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let lower = induced_norm_lower_bound(reference, perturbed, trials, seed)?;
    Ok((lower, delta_upper))
}
