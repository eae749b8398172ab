//! The two-outcome instrument `E0(rho) = K rho K`, `E1(rho) = (1 - tr K rho K) I/D`.

use serde::Serialize;

use crate::error::{DgsError, Result};
use crate::hamiltonian::{jump_operator, LocalHamiltonian};
use crate::operator::{
    apply_normalized, eig_h, operator_norm, Channel, DenseOperator, Spectrum,
};
use crate::registry::{Named, Registry};
use crate::stopping::check_epsilon;

/// Slack allowed on `||K|| <= 1`.
pub const CONTRACTION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KVariant {
    Product,
    Ideal,
    Perturbed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub n_qubits: usize,
    pub m: usize,
    pub kappa: f64,
    pub hamiltonian: String,
    pub noise: Option<String>,
}

impl Provenance {
    pub fn of(h: &LocalHamiltonian) -> Self {
        Self {
            n_qubits: h.n_qubits(),
            m: h.m(),
            kappa: h.kappa(),
            hamiltonian: h.to_json(),
            noise: None,
        }
    }
}

/// A Hermitian contraction `K` with its spectrum and derived trace bounds
/// `mu_min = min eig(K^2)`, `mu_max = max eig(K^2)`.
#[derive(Debug, Clone)]
pub struct Instrument {
    k: DenseOperator,
    spectrum: Spectrum,
    epsilon: f64,
    variant: KVariant,
    mu_min: f64,
    mu_max: f64,
    provenance: Provenance,
}

impl Instrument {
    /// Validates `K` (Hermitian, `K^2 <= 1`) and computes its spectrum.
    pub fn from_kraus(
        k: DenseOperator,
        epsilon: f64,
        variant: KVariant,
        provenance: Provenance,
    ) -> Result<Self> {
        let spectrum = eig_h(&k)?;
        let norm = spectrum.max_abs();
        if norm > 1.0 + CONTRACTION_TOL {
            return Err(DgsError::Invariant(format!(
                "{variant:?} Kraus operator has norm {norm:.15} > 1"
            )));
        }
        let sq: Vec<f64> = spectrum
            .eigenvalues()
            .iter()
            .map(|e| (e * e).min(1.0))
            .collect();
        let mu_min = sq.iter().copied().fold(f64::INFINITY, f64::min);
        let mu_max = sq.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            k,
            spectrum,
            epsilon,
            variant,
            mu_min,
            mu_max,
            provenance,
        })
    }

    pub fn k(&self) -> &DenseOperator {
        &self.k
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn variant(&self) -> KVariant {
        self.variant
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn dim(&self) -> usize {
        self.k.dim()
    }

    pub fn m(&self) -> usize {
        self.provenance.m
    }

    pub fn kappa(&self) -> f64 {
        self.provenance.kappa
    }

    /// Eigenvalues of `K^2`, ascending by eigenvalue of `K`.
    pub fn success_eigenvalues(&self) -> Vec<f64> {
        self.spectrum.eigenvalues().iter().map(|e| e * e).collect()
    }

    /// `tr K^{2n} / D`, the probability of `n` consecutive zeros from `I/D`.
    pub fn zero_run_probability(&self, n: usize) -> f64 {
        let d = self.dim() as f64;
        self.spectrum
            .eigenvalues()
            .iter()
            .map(|e| (e * e).powi(n as i32))
            .sum::<f64>()
            / d
    }
}

impl Channel for Instrument {
    fn dim(&self) -> usize {
        self.k.dim()
    }

    fn apply(&self, rho: &DenseOperator) -> DenseOperator {
        self.k.sandwich(rho)
    }

    fn mu_max(&self) -> f64 {
        self.mu_max
    }

    fn mu_min(&self) -> f64 {
        self.mu_min
    }

    fn kraus_operator(&self) -> Option<&DenseOperator> {
        Some(&self.k)
    }

    fn label(&self) -> String {
        match &self.provenance.noise {
            Some(n) => format!("{:?} K, {n}", self.variant),
            None => format!("{:?} K", self.variant),
        }
    }
}

/// `K = prod_{i=1..m} F_i prod_{i=m..1} F_i` with `F_i = (1-eps) I + eps kappa_i k_i`.
pub fn build_k_product(h: &LocalHamiltonian, epsilon: f64) -> Result<Instrument> {
    check_epsilon(epsilon)?;
    let d = h.dim();
    let identity = DenseOperator::identity(d);
    let factors = h
        .terms()
        .iter()
        .zip(h.weights())
        .map(|(t, &w)| {
            let k_i = jump_operator(t, h.n_qubits())?;
            Ok(identity.scale(1.0 - epsilon).add(&k_i.scale(epsilon * w)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut forward = identity.clone();
    for f in &factors {
        forward = forward.matmul(f);
    }
    let mut k = forward;
    for f in factors.iter().rev() {
        k = k.matmul(f);
    }
    let asym = k.max_asymmetry();
    if asym > 1e-12 {
        return Err(DgsError::Invariant(format!(
            "palindromic product is not Hermitian (asymmetry {asym:.3e})"
        )));
    }
    let k = DenseOperator::hermitian_part(k.into_matrix());
    let inst = Instrument::from_kraus(k, epsilon, KVariant::Product, Provenance::of(h))?;
    if h.m() > 1 {
        let (lo, hi) = (inst.spectrum.min(), inst.spectrum.max());
        if !(lo > 0.0 && hi < 1.0) {
            return Err(DgsError::Invariant(format!(
                "product K eigenvalues [{lo}, {hi}] not inside (0, 1)"
            )));
        }
    }
    Ok(inst)
}

/// `K~ = (1-eps)^{2m-1} (I - eps H / kappa)`.
pub fn build_k_ideal(h: &LocalHamiltonian, epsilon: f64) -> Result<Instrument> {
    check_epsilon(epsilon)?;
    let d = h.dim();
    let prefactor = (1.0 - epsilon).powi(2 * h.m() as i32 - 1);
    let k = DenseOperator::identity(d)
        .sub(&h.to_dense()?.scale(epsilon / h.kappa()))
        .scale(prefactor);
    Instrument::from_kraus(k, epsilon, KVariant::Ideal, Provenance::of(h))
}

/// `(K rho K / tr K rho K, tr K rho K)` for a unit-trace `rho`.
pub fn apply_e0(inst: &Instrument, rho: &DenseOperator) -> Result<(DenseOperator, f64)> {
    let tr = rho.real_trace();
    if (tr - 1.0).abs() > 1e-8 {
        return Err(DgsError::NotDensityMatrix(format!("trace {tr} deviates from 1")));
    }
    apply_normalized(inst, rho)
}

/// `||K_product - K_ideal||`.
pub fn k_deviation(h: &LocalHamiltonian, epsilon: f64) -> Result<f64> {
    let product = build_k_product(h, epsilon)?;
    let ideal = build_k_ideal(h, epsilon)?;
    Ok(operator_norm(&product.k.sub(&ideal.k)))
}

/// The operator `Q` with `K_product = K~(H')` for
/// `H' = H + (eps kappa m^2 / (1 - eps)) Q`, i.e. the Hamiltonian shift that the
/// product form implicitly applies relative to the ideal one.
pub fn implicit_q(h: &LocalHamiltonian, epsilon: f64) -> Result<DenseOperator> {
    let product = build_k_product(h, epsilon)?;
    let ideal = build_k_ideal(h, epsilon)?;
    let m = h.m() as f64;
    let prefactor = (1.0 - epsilon).powi(2 * h.m() as i32 - 1);
    // K - K~ = -(1-eps)^{2m-1} (eps/kappa) (H' - H)
    let delta_h = ideal
        .k
        .sub(&product.k)
        .scale(h.kappa() / (epsilon * prefactor));
    Ok(delta_h.scale((1.0 - epsilon) / (epsilon * h.kappa() * m * m)))
}

/// A way of turning `(H, eps)` into a Kraus operator.
pub trait KrausConstruction: Named + Send + Sync {
    fn build(&self, h: &LocalHamiltonian, epsilon: f64) -> Result<Instrument>;
}

pub struct ProductKraus;
pub struct IdealKraus;

impl Named for ProductKraus {
    fn name(&self) -> &'static str {
        "product"
    }
}

impl KrausConstruction for ProductKraus {
    fn build(&self, h: &LocalHamiltonian, epsilon: f64) -> Result<Instrument> {
        build_k_product(h, epsilon)
    }
}

impl Named for IdealKraus {
    fn name(&self) -> &'static str {
        "ideal"
    }
}

impl KrausConstruction for IdealKraus {
    fn build(&self, h: &LocalHamiltonian, epsilon: f64) -> Result<Instrument> {
        build_k_ideal(h, epsilon)
    }
}

pub fn kraus_constructions() -> Registry<dyn KrausConstruction> {
    Registry::<dyn KrausConstruction>::new("k_variant")
        .with(Box::new(ProductKraus))
        .with(Box::new(IdealKraus))
}
