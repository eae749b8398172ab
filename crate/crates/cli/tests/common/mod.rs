#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use dgs_core::hamiltonian::{random_pauli_hamiltonian, LocalHamiltonian};

pub const BETAS: [f64; 3] = [0.2, 0.5, 1.0];
pub const EPSILONS: [f64; 3] = [0.1, 0.05, 0.02];

/// `H = Z (x) I + I (x) Z`.
pub fn reference() -> LocalHamiltonian {
    LocalHamiltonian::from_terms(2, &[(1.0, "ZI"), (1.0, "IZ")]).unwrap()
}

/// Twenty seeded instances on 2-4 qubits with 2-6 terms.
pub fn suite() -> Vec<LocalHamiltonian> {
    (0..20u64)
        .map(|i| {
            let n_qubits = 2 + (i % 3) as usize;
            let n_terms = 2 + ((i * 3 + i / 3) % 5) as usize;
            random_pauli_hamiltonian(n_qubits, n_terms, 0x5eed_0000 + i).unwrap()
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    dgs_cli::commands::log_log_slope(xs, ys)
}

/// Writes `h.json` and `config.json` into `dir` and returns the config path.
pub fn write_config(dir: &Path, h: &LocalHamiltonian, extra: serde_json::Value) -> PathBuf {
    fs::write(dir.join("h.json"), h.to_json()).unwrap();
    let mut doc = serde_json::json!({ "hamiltonian_path": "h.json" });
    for (k, v) in extra.as_object().unwrap() {
        doc[k] = v.clone();
    }
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    path
}
