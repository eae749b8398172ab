//! Local Hamiltonians built from weighted Pauli strings, their derived
//! constants, and brute-force Gibbs oracles.
//!
//! Qubit 0 is the leftmost letter of a Pauli string and the most significant
//! bit of a computational basis index.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{DgsError, Result};
use crate::operator::{eig_h, CMatrix, DenseOperator, Spectrum};

/// Default cap on the number of qubits for dense assembly.
pub const DEFAULT_QUBIT_CAP: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// One term `c * P` with `P` a Pauli string. Since `||P|| = 1`, `||h|| = |c|`.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliTerm {
    coefficient: f64,
    paulis: Vec<Pauli>,
}

impl PauliTerm {
    pub fn new(coefficient: f64, paulis: Vec<Pauli>) -> Result<Self> {
        if !coefficient.is_finite() || coefficient == 0.0 {
            return Err(DgsError::param(
                "coefficient",
                coefficient,
                "must be finite and nonzero",
            ));
        }
        if paulis.iter().all(|p| *p == Pauli::I) {
            return Err(DgsError::Parse {
                location: "term".into(),
                message: "pure-identity terms are not allowed; shift the Hamiltonian instead"
                    .into(),
            });
        }
        Ok(Self {
            coefficient,
            paulis,
        })
    }

    /// Parses a string such as `"ZIX"`.
    pub fn parse(coefficient: f64, letters: &str) -> Result<Self> {
        let paulis = parse_letters(letters, "term")?;
        Self::new(coefficient, paulis)
    }

    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    pub fn paulis(&self) -> &[Pauli] {
        &self.paulis
    }

    pub fn n_qubits(&self) -> usize {
        self.paulis.len()
    }

    pub fn norm(&self) -> f64 {
        self.coefficient.abs()
    }

    /// Dense matrix of the bare Pauli string (without the coefficient).
    pub fn pauli_matrix(&self) -> CMatrix {
        pauli_string_matrix(&self.paulis)
    }

    pub fn to_dense(&self) -> DenseOperator {
        DenseOperator::hermitian_part(self.pauli_matrix().scale(self.coefficient))
    }
}

impl fmt::Display for PauliTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self.paulis.iter().map(|p| p.as_char()).collect();
        write!(f, "{:+}*{}", self.coefficient, s)
    }
}

fn parse_letters(letters: &str, location: &str) -> Result<Vec<Pauli>> {
    letters
        .chars()
        .enumerate()
        .map(|(pos, c)| {
            Pauli::from_char(c).ok_or_else(|| DgsError::Parse {
                location: format!("{location} position {pos}"),
                message: format!("unknown Pauli letter {c:?} (expected one of I, X, Y, Z)"),
            })
        })
        .collect()
}

fn pauli_string_matrix(paulis: &[Pauli]) -> CMatrix {
    let n = paulis.len();
    let d = 1usize << n;
    let mut flip = 0usize;
    for (q, p) in paulis.iter().enumerate() {
        if matches!(p, Pauli::X | Pauli::Y) {
            flip |= 1 << (n - 1 - q);
        }
    }
    let mut m = CMatrix::zeros(d, d);
    for col in 0..d {
        let mut phase = Complex64::new(1.0, 0.0);
        for (q, p) in paulis.iter().enumerate() {
            let bit = (col >> (n - 1 - q)) & 1;
            let sign = if bit == 1 { -1.0 } else { 1.0 };
            match p {
                Pauli::I | Pauli::X => {}
                Pauli::Z => phase *= sign,
                Pauli::Y => phase *= Complex64::new(0.0, sign),
            }
        }
        m[(col ^ flip, col)] = phase;
    }
    m
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct HamiltonianDoc {
    n_qubits: usize,
    terms: Vec<TermDoc>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct TermDoc {
    c: f64,
    p: String,
}

/// `H = sum_i c_i P_i`, in document order.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalHamiltonian {
    n_qubits: usize,
    terms: Vec<PauliTerm>,
    kappa: f64,
    weights: Vec<f64>,
}

impl LocalHamiltonian {
    pub fn new(n_qubits: usize, terms: Vec<PauliTerm>) -> Result<Self> {
        if n_qubits == 0 {
            return Err(DgsError::param("n_qubits", 0.0, "must be positive"));
        }
        if terms.is_empty() {
            return Err(DgsError::Parse {
                location: "terms".into(),
                message: "at least one term is required".into(),
            });
        }
        for (i, t) in terms.iter().enumerate() {
            if t.n_qubits() != n_qubits {
                return Err(DgsError::Parse {
                    location: format!("terms[{i}].p"),
                    message: format!(
                        "Pauli string has length {}, expected n_qubits = {n_qubits}",
                        t.n_qubits()
                    ),
                });
            }
        }
        let kappa: f64 = terms.iter().map(PauliTerm::norm).sum();
        let weights = terms.iter().map(|t| t.norm() / kappa).collect();
        Ok(Self {
            n_qubits,
            terms,
            kappa,
            weights,
        })
    }

    /// Convenience constructor from `(coefficient, letters)` pairs.
    pub fn from_terms(n_qubits: usize, terms: &[(f64, &str)]) -> Result<Self> {
        let parsed = terms
            .iter()
            .enumerate()
            .map(|(i, (c, p))| {
                let paulis = parse_letters(p, &format!("terms[{i}].p"))?;
                PauliTerm::new(*c, paulis).map_err(|e| relocate(e, i))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(n_qubits, parsed)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn terms(&self) -> &[PauliTerm] {
        &self.terms
    }

    /// Number of terms `m`.
    pub fn m(&self) -> usize {
        self.terms.len()
    }

    /// `kappa = sum_i ||h_i||`.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `kappa_i = ||h_i|| / kappa`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn term_norms(&self) -> Vec<f64> {
        self.terms.iter().map(PauliTerm::norm).collect()
    }

    pub fn to_dense(&self) -> Result<DenseOperator> {
        self.to_dense_capped(DEFAULT_QUBIT_CAP)
    }

    pub fn to_dense_capped(&self, cap: usize) -> Result<DenseOperator> {
        if self.n_qubits > cap {
            return Err(DgsError::DimensionCap {
                n_qubits: self.n_qubits,
                cap,
            });
        }
        let d = self.dim();
        let mut acc = CMatrix::zeros(d, d);
        for t in &self.terms {
            acc += t.pauli_matrix().scale(t.coefficient());
        }
        DenseOperator::hermitian(acc)
    }

    pub fn to_json(&self) -> String {
        let doc = HamiltonianDoc {
            n_qubits: self.n_qubits,
            terms: self
                .terms
                .iter()
                .map(|t| TermDoc {
                    c: t.coefficient,
                    p: t.paulis.iter().map(|p| p.as_char()).collect(),
                })
                .collect(),
        };
        serde_json::to_string(&doc).expect("hamiltonian document serializes")
    }
}

fn relocate(err: DgsError, index: usize) -> DgsError {
    match err {
        DgsError::InvalidParameter { value, reason, .. } => DgsError::Parse {
            location: format!("terms[{index}].c"),
            message: format!("{value}: {reason}"),
        },
        DgsError::Parse { message, .. } => DgsError::Parse {
            location: format!("terms[{index}].p"),
            message,
        },
        other => other,
    }
}

/// Parses the JSON Hamiltonian document
/// `{"n_qubits": n, "terms": [{"c": <float>, "p": "<IXYZ string>"}, ...]}`.
pub fn parse_hamiltonian(text: &str) -> Result<LocalHamiltonian> {
    let doc: HamiltonianDoc = serde_json::from_str(text).map_err(|e| DgsError::Parse {
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    let mut terms = Vec::with_capacity(doc.terms.len());
    for (i, t) in doc.terms.iter().enumerate() {
        let paulis = parse_letters(&t.p, &format!("terms[{i}].p"))?;
        if paulis.len() != doc.n_qubits {
            return Err(DgsError::Parse {
                location: format!("terms[{i}].p"),
                message: format!(
                    "Pauli string has length {}, expected n_qubits = {}",
                    paulis.len(),
                    doc.n_qubits
                ),
            });
        }
        terms.push(PauliTerm::new(t.c, paulis).map_err(|e| relocate(e, i))?);
    }
    LocalHamiltonian::new(doc.n_qubits, terms)
}

/// Random instance with `n_terms` distinct non-identity Pauli strings and
/// coefficients uniform in `[-1, 1]`, redrawn while `|c| < 0.05`.
pub fn random_pauli_hamiltonian(n_qubits: usize, n_terms: usize, seed: u64) -> Result<LocalHamiltonian> {
    use rand::{Rng, SeedableRng};
    let available = 4usize.saturating_pow(n_qubits as u32) - 1;
    if n_qubits == 0 || n_terms == 0 || n_terms > available {
        return Err(DgsError::param(
            "n_terms",
            n_terms as f64,
            format!("need 1 <= n_terms <= 4^n - 1 = {available}"),
        ));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let letters = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
    let mut seen = std::collections::HashSet::new();
    let mut terms = Vec::with_capacity(n_terms);
    while terms.len() < n_terms {
        let paulis: Vec<Pauli> = (0..n_qubits).map(|_| letters[rng.random_range(0..4)]).collect();
        if paulis.iter().all(|p| *p == Pauli::I) || !seen.insert(paulis.clone()) {
            continue;
        }
        let mut c = 0.0f64;
        while c.abs() < 0.05 {
            c = rng.random_range(-1.0..=1.0);
        }
        terms.push(PauliTerm::new(c, paulis)?);
    }
    LocalHamiltonian::new(n_qubits, terms)
}

/// `k_i = (1 - h_i/||h_i||) / 2`, a projector for Pauli-string terms.
pub fn jump_operator(term: &PauliTerm, n_qubits: usize) -> Result<DenseOperator> {
    if term.n_qubits() != n_qubits {
        return Err(DgsError::DimensionMismatch {
            expected: n_qubits,
            got: term.n_qubits(),
        });
    }
    let d = 1usize << n_qubits;
    let sign = term.coefficient().signum();
    let m = (CMatrix::identity(d, d) - term.pauli_matrix().scale(sign)).scale(0.5);
    DenseOperator::hermitian(m)
}

/// Exact Gibbs state `e^{-beta H} / Z` and `log Z`.
#[derive(Debug, Clone)]
pub struct GibbsOracle {
    pub beta: f64,
    pub gibbs_state: DenseOperator,
    pub log_partition: f64,
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(DgsError::param("beta", beta, "must be finite and >= 0"));
    }
    Ok(())
}

/// `log tr e^{-beta A}` from a precomputed spectrum, shifted by the extreme
/// eigenvalue so that it stays finite.
pub fn log_trace_exp(spectrum: &Spectrum, beta: f64) -> f64 {
    let e = spectrum.eigenvalues();
    let shift = e
        .iter()
        .map(|x| -beta * x)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = e.iter().map(|x| (-beta * x - shift).exp()).sum();
    shift + sum.ln()
}

pub fn exact_gibbs(h: &LocalHamiltonian, beta: f64) -> Result<GibbsOracle> {
    check_beta(beta)?;
    let spectrum = eig_h(&h.to_dense()?)?;
    let log_z = log_trace_exp(&spectrum, beta);
    let weights: Vec<f64> = spectrum
        .eigenvalues()
        .iter()
        .map(|x| (-beta * x - log_z).exp())
        .collect();
    Ok(GibbsOracle {
        beta,
        gibbs_state: spectrum.from_values(&weights),
        log_partition: log_z,
    })
}

/// `log Z = log tr e^{-beta H}`.
pub fn exact_partition(h: &LocalHamiltonian, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let spectrum = eig_h(&h.to_dense()?)?;
    Ok(log_trace_exp(&spectrum, beta))
}
