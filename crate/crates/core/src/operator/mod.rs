//! Dense complex operators and the Hermitian linear algebra built on them.
//!
//! Everything here is a pure function of immutable values. Dimensions are
//! expected to stay at desk scale (D up to a few thousand); there is no sparse
//! or tensor-network path.
//!
//! Conventions: the trace norm is the plain sum of singular values, with no
//! factor 1/2, and fidelity is the root fidelity `tr sqrt(sqrt(rho) sigma sqrt(rho))`.

mod channel;
mod metrics;
mod spectrum;

pub use channel::{
    apply_normalized, channel_delta_estimate, induced_norm_lower_bound, random_pure_state,
    random_unit_hermitian, Channel,
};
pub use metrics::{fidelity, operator_norm, trace_distance, trace_norm};
pub use spectrum::{eig_h, matrix_function, Cosh, Exp, ScalarFn, Spectrum};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{DgsError, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Elementwise tolerance for accepting a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    data: CMatrix,
    hermitian: bool,
}

impl DenseOperator {
    /// Wraps a square matrix without any Hermiticity claim.
    pub fn new(data: CMatrix) -> Result<Self> {
        check_square(&data)?;
        Ok(Self {
            data,
            hermitian: false,
        })
    }

    /// Wraps a square matrix that must be Hermitian to within [`HERMITIAN_TOL`]
    /// elementwise. The stored matrix is the exact Hermitian part.
    pub fn hermitian(data: CMatrix) -> Result<Self> {
        check_square(&data)?;
        let asym = max_asymmetry(&data);
        if asym > HERMITIAN_TOL {
            return Err(DgsError::NotHermitian {
                max_asymmetry: asym,
            });
        }
        Ok(Self::hermitian_part(data))
    }

    /// Replaces `data` by `(A + A^dagger)/2` and flags it Hermitian. Used on
    /// results of products that are Hermitian in exact arithmetic.
    pub(crate) fn hermitian_part(data: CMatrix) -> Self {
        let adj = data.adjoint();
        Self {
            data: (data + adj).scale(0.5),
            hermitian: true,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            data: CMatrix::identity(dim, dim),
            hermitian: true,
        }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            data: CMatrix::identity(dim, dim).scale(1.0 / dim as f64),
            hermitian: true,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            data: CMatrix::zeros(dim, dim),
            hermitian: true,
        }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let d = values.len();
        let mut data = CMatrix::zeros(d, d);
        for (i, v) in values.iter().enumerate() {
            data[(i, i)] = Complex64::new(*v, 0.0);
        }
        Self {
            data,
            hermitian: true,
        }
    }

    /// Projector `|psi><psi|` for a (not necessarily normalized) vector.
    pub fn projector(psi: &nalgebra::DVector<Complex64>) -> Self {
        let data = psi * psi.adjoint();
        Self::hermitian_part(data)
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_matrix(self) -> CMatrix {
        self.data
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn max_asymmetry(&self) -> f64 {
        max_asymmetry(&self.data)
    }

    pub fn trace(&self) -> Complex64 {
        self.data.trace()
    }

    pub fn real_trace(&self) -> f64 {
        self.data.trace().re
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            data: self.data.scale(s),
            hermitian: self.hermitian,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            data: &self.data + &other.data,
            hermitian: self.hermitian && other.hermitian,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            data: &self.data - &other.data,
            hermitian: self.hermitian && other.hermitian,
        }
    }

    /// `self + s * other`, in place.
    pub fn add_scaled_mut(&mut self, s: f64, other: &Self) {
        self.data.zip_apply(&other.data, |a, b| *a += b * s);
        self.hermitian &= other.hermitian;
    }

    pub fn matmul(&self, other: &Self) -> Self {
        Self {
            data: &self.data * &other.data,
            hermitian: false,
        }
    }

    /// `K rho K^dagger`, Hermitian whenever `rho` is.
    pub fn sandwich(&self, rho: &Self) -> Self {
        let data = &self.data * &rho.data * self.data.adjoint();
        if rho.hermitian {
            Self::hermitian_part(data)
        } else {
            Self {
                data,
                hermitian: false,
            }
        }
    }

    /// Real part of `tr(self * other)`; both operands Hermitian gives a real number.
    pub fn trace_product(&self, other: &Self) -> f64 {
        let d = self.dim();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..d {
            for j in 0..d {
                acc += self.data[(i, j)] * other.data[(j, i)];
            }
        }
        acc.re
    }

    /// Checks Hermiticity, unit trace and positivity, all within `tol`.
    pub fn check_density(&self, tol: f64) -> Result<()> {
        let asym = self.max_asymmetry();
        if asym > tol.max(HERMITIAN_TOL) {
            return Err(DgsError::NotDensityMatrix(format!(
                "max asymmetry {asym:.3e}"
            )));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return Err(DgsError::NotDensityMatrix(format!(
                "trace {:.12} deviates from 1",
                tr.re
            )));
        }
        let spectrum = eig_h(&Self::hermitian_part(self.data.clone()))?;
        let min = spectrum.eigenvalues()[0];
        if min < -tol {
            return Err(DgsError::NotDensityMatrix(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
        Ok(())
    }

    /// Entrywise maximum absolute difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

fn check_square(m: &CMatrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(DgsError::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Err(DgsError::DimensionMismatch {
            expected: 1,
            got: 0,
        });
    }
    Ok(())
}

fn max_asymmetry(m: &CMatrix) -> f64 {
    let d = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in i..d {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermitian_rejects_asymmetric_input() {
        let mut m = CMatrix::identity(2, 2);
        m[(0, 1)] = Complex64::new(0.5, 0.0);
        match DenseOperator::hermitian(m) {
            Err(DgsError::NotHermitian { max_asymmetry }) => {
                assert!((max_asymmetry - 0.5).abs() < 1e-15)
            }
            other => panic!("expected NotHermitian, got {other:?}"),
        }
    }

    #[test]
    fn empty_matrix_is_rejected() {
        assert!(DenseOperator::new(CMatrix::zeros(0, 0)).is_err());
        assert!(DenseOperator::new(CMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn maximally_mixed_is_a_density_matrix() {
        let rho = DenseOperator::maximally_mixed(8);
        rho.check_density(1e-12).unwrap();
        assert!((rho.real_trace() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn check_density_flags_negative_eigenvalue() {
        let rho = DenseOperator::diagonal(&[1.5, -0.5]);
        assert!(rho.check_density(1e-8).is_err());
    }
}
