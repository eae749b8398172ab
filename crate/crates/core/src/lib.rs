//! Simulation and exact evaluation of the dissipative Gibbs sampler: a
//! weak-measurement process on a local Hamiltonian, halted by a coin-flip rule
//! on the current run of zero outcomes, whose expected output is proportional
//! to `cosh(lambda K)`.

// range checks are written `!(x > 0.0)` so that NaN fails them
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod hamiltonian;
pub mod instrument;
pub mod noise;
pub mod operator;
pub mod registry;
pub mod stopping;

pub use error::{DgsError, Result};
