//! Constants for the big-O bounds, read from the committed `calibration.json`.
//!
//! `fitted` records the largest ratio measured/scale seen on the randomized
//! suite when the file was last regenerated (`examples/calibrate.rs` in the
//! CLI crate). `constants` are the values used in budget checks: the fitted
//! ratio rounded up, except `gibbs_error`, which stays at the pinned 5.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

const RAW: &str = include_str!("../calibration.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    /// `||E[rho_tau] - rho_G||_1 <= C beta eps kappa m^2 + ...`
    pub gibbs_error: f64,
    /// `|Z_hat / Z - 1| <= C beta eps kappa m^2`
    pub partition_error: f64,
    /// `||K - K~|| <= C eps^2 m^2`
    pub k_deviation: f64,
    /// `||E[rho'_tau] - E[rho_tau]||_1 <= C delta beta kappa / eps min(D, e^{2 beta kappa})`
    pub fault: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fitted {
    pub gibbs_error: Option<f64>,
    pub partition_error: Option<f64>,
    pub k_deviation: Option<f64>,
    pub fault: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub schema_version: u32,
    pub constants: Constants,
    pub fitted: Fitted,
}

impl Calibration {
    pub fn builtin() -> &'static Calibration {
        static CAL: OnceLock<Calibration> = OnceLock::new();
        CAL.get_or_init(|| serde_json::from_str(RAW).expect("calibration.json is valid"))
    }

    pub fn raw() -> &'static str {
        RAW
    }

    /// Hex SHA-256 of the calibration file bytes.
    pub fn sha256() -> String {
        let digest = Sha256::digest(RAW.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn constants() -> Constants {
    Calibration::builtin().constants
}
