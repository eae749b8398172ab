//! Perturbed implementations `E0'` of the outcome-0 branch, each paired with an
//! analytic upper bound on the induced 1-norm distance `||E0 - E0'||_1`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{DgsError, Result};
use crate::instrument::{Instrument, KVariant};
use crate::operator::{operator_norm, random_unit_hermitian, Channel, DenseOperator};
use crate::registry::{Named, Registry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    DepolarizeAfter,
    KrausPerturbation,
    HamiltonianPerturbation,
}

impl NoiseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::DepolarizeAfter => "depolarize_after",
            NoiseKind::KrausPerturbation => "kraus_perturbation",
            NoiseKind::HamiltonianPerturbation => "hamiltonian_perturbation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub strength: f64,
    #[serde(default)]
    pub seed: u64,
}

/// `E0'` together with its bound on `||E0 - E0'||_1`.
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub channel: Arc<dyn Channel>,
    pub delta_upper: f64,
}

pub trait NoiseStrategy: Named + Send + Sync {
    fn perturb(&self, inst: &Instrument, strength: f64, seed: u64) -> Result<Perturbation>;
}

/// `E0'(rho) = (1-p) K rho K + p tr(K rho K) I/D`.
#[derive(Debug, Clone)]
pub struct DepolarizedChannel {
    inner: Instrument,
    p: f64,
}

impl DepolarizedChannel {
    pub fn new(inner: Instrument, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(DgsError::param("strength", p, "depolarizing rate must lie in [0, 1]"));
        }
        Ok(Self { inner, p })
    }
}

impl Channel for DepolarizedChannel {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, rho: &DenseOperator) -> DenseOperator {
        let out = self.inner.apply(rho);
        if self.p == 0.0 {
            return out;
        }
        let d = self.dim();
        let tr = out.real_trace();
        let mut mixed = out.scale(1.0 - self.p);
        mixed.add_scaled_mut(self.p * tr, &DenseOperator::maximally_mixed(d));
        mixed
    }

    // the depolarizer is trace preserving, so the trace window of E0 carries over
    fn mu_max(&self) -> f64 {
        self.inner.mu_max()
    }

    fn mu_min(&self) -> f64 {
        self.inner.mu_min()
    }

    fn label(&self) -> String {
        format!("depolarize_after(p={}) o {}", self.p, self.inner.label())
    }
}

pub struct DepolarizeAfter;
pub struct KrausPerturbation;
pub struct HamiltonianPerturbation;

impl Named for DepolarizeAfter {
    fn name(&self) -> &'static str {
        NoiseKind::DepolarizeAfter.as_str()
    }
}

impl NoiseStrategy for DepolarizeAfter {
    fn perturb(&self, inst: &Instrument, strength: f64, _seed: u64) -> Result<Perturbation> {
        let channel = DepolarizedChannel::new(inst.clone(), strength)?;
        // ||E0(rho) - tr(E0 rho) I/D||_1 <= 2 tr E0(rho) <= 2 mu_max
        Ok(Perturbation {
            delta_upper: 2.0 * strength * inst.mu_max(),
            channel: Arc::new(channel),
        })
    }
}

fn perturbed_instrument(inst: &Instrument, k: DenseOperator, note: String) -> Result<Instrument> {
    let mut prov = inst.provenance().clone();
    prov.noise = Some(note);
    Instrument::from_kraus(k, inst.epsilon(), KVariant::Perturbed, prov)
}

impl Named for KrausPerturbation {
    fn name(&self) -> &'static str {
        NoiseKind::KrausPerturbation.as_str()
    }
}

impl NoiseStrategy for KrausPerturbation {
    fn perturb(&self, inst: &Instrument, eta: f64, seed: u64) -> Result<Perturbation> {
        if !(0.0..1.0).contains(&eta) {
            return Err(DgsError::param("strength", eta, "Kraus perturbation must lie in [0, 1)"));
        }
        let v = random_unit_hermitian(inst.dim(), seed);
        let k = inst.k().add(&v.scale(eta));
        let note = format!("kraus_perturbation(eta={eta}, seed={seed})");
        let perturbed = perturbed_instrument(inst, k, note)?;
        // K' rho K' - K rho K = eta (V rho K + K rho V) + eta^2 V rho V
        let k_norm = inst.spectrum().max_abs();
        Ok(Perturbation {
            delta_upper: 2.0 * eta * k_norm + eta * eta,
            channel: Arc::new(perturbed),
        })
    }
}

impl Named for HamiltonianPerturbation {
    fn name(&self) -> &'static str {
        NoiseKind::HamiltonianPerturbation.as_str()
    }
}

impl NoiseStrategy for HamiltonianPerturbation {
    /// Shifts `H` by `strength * Q` with a seeded random `||Q|| = 1`, carried to
    /// `K` through the linear map `H -> (1-eps)^{2m-1} (I - eps H / kappa)`.
    fn perturb(&self, inst: &Instrument, strength: f64, seed: u64) -> Result<Perturbation> {
        let kappa = inst.kappa();
        if !(0.0..kappa).contains(&strength) {
            return Err(DgsError::param(
                "strength",
                strength,
                format!("Hamiltonian shift must lie in [0, kappa = {kappa})"),
            ));
        }
        let eps = inst.epsilon();
        let q = random_unit_hermitian(inst.dim(), seed);
        let pre = (1.0 - eps).powi(2 * inst.m() as i32 - 1);
        let delta_k = q.scale(-pre * eps / kappa * strength);
        let dk = operator_norm(&delta_k);
        let note = format!("hamiltonian_perturbation(norm={strength}, seed={seed})");
        let perturbed = perturbed_instrument(inst, inst.k().add(&delta_k), note)?;
        let k_norm = inst.spectrum().max_abs();
        Ok(Perturbation {
            delta_upper: 2.0 * k_norm * dk + dk * dk,
            channel: Arc::new(perturbed),
        })
    }
}

pub fn noise_models() -> Registry<dyn NoiseStrategy> {
    Registry::<dyn NoiseStrategy>::new("noise model")
        .with(Box::new(DepolarizeAfter))
        .with(Box::new(KrausPerturbation))
        .with(Box::new(HamiltonianPerturbation))
}

/// Applies `noise` to `inst` through the registered strategy of that kind.
pub fn perturb_instrument(inst: &Instrument, noise: &NoiseModel) -> Result<Perturbation> {
    if !(noise.strength >= 0.0) || !noise.strength.is_finite() {
        return Err(DgsError::param("strength", noise.strength, "must be finite and >= 0"));
    }
    noise_models()
        .get(noise.kind.as_str())?
        .perturb(inst, noise.strength, noise.seed)
}
