use nalgebra::{DVector, SymmetricEigen};
use num_complex::Complex64;

use super::{CMatrix, DenseOperator};
use crate::error::{DgsError, Result};

/// Eigendecomposition `A = V diag(e) V^dagger` of a Hermitian operator, with
/// eigenvalues in ascending order.
#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    eigenvectors: CMatrix,
}

impl Spectrum {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Unitary whose columns are the eigenvectors.
    pub fn eigenvectors(&self) -> &CMatrix {
        &self.eigenvectors
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    /// Largest |eigenvalue|, i.e. the operator norm.
    pub fn max_abs(&self) -> f64 {
        self.min().abs().max(self.max().abs())
    }

    pub fn eigenvector(&self, i: usize) -> DVector<Complex64> {
        self.eigenvectors.column(i).into_owned()
    }

    pub fn reconstruct(&self) -> DenseOperator {
        self.from_values(&self.eigenvalues)
    }

    /// `V diag(values) V^dagger`.
    pub fn from_values(&self, values: &[f64]) -> DenseOperator {
        let v = &self.eigenvectors;
        let d = self.dim();
        let mut scaled = v.clone();
        for (j, val) in values.iter().enumerate() {
            for i in 0..d {
                scaled[(i, j)] *= *val;
            }
        }
        DenseOperator::hermitian_part(scaled * v.adjoint())
    }

    /// `e^{-s} f(A)` when `log_shift = Some(s)`, otherwise `f(A)`.
    pub fn apply(&self, f: &dyn ScalarFn, log_shift: Option<f64>) -> Result<DenseOperator> {
        let values = self.map_values(f, log_shift)?;
        Ok(self.from_values(&values))
    }

    /// The scalar images `e^{-s} f(e_i)`, checked for finiteness.
    pub fn map_values(&self, f: &dyn ScalarFn, log_shift: Option<f64>) -> Result<Vec<f64>> {
        self.eigenvalues
            .iter()
            .map(|&e| {
                let v = match log_shift {
                    Some(s) => f.eval_shifted(e, s),
                    None => f.eval(e),
                };
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(DgsError::NonFiniteFunction { eigenvalue: e })
                }
            })
            .collect()
    }
}

/// Eigendecomposition of a Hermitian operator.
pub fn eig_h(a: &DenseOperator) -> Result<Spectrum> {
    if !a.is_hermitian() {
        return Err(DgsError::NotHermitian {
            max_asymmetry: a.max_asymmetry(),
        });
    }
    let eig = SymmetricEigen::new(a.matrix().clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let d = a.dim();
    let mut eigenvectors = CMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
    })
}

/// Applies a real scalar function to a Hermitian operator through its
/// eigendecomposition. With `log_shift = Some(s)` the result is `e^{-s} f(A)`,
/// computed so that `f(A)` itself is never formed when it would overflow.
pub fn matrix_function(
    a: &DenseOperator,
    f: &dyn ScalarFn,
    log_shift: Option<f64>,
) -> Result<DenseOperator> {
    eig_h(a)?.apply(f, log_shift)
}

/// A real function of a real variable, optionally with an overflow-safe
/// shifted evaluation.
pub trait ScalarFn {
    fn eval(&self, x: f64) -> f64;

    /// `e^{-shift} f(x)`.
    fn eval_shifted(&self, x: f64, shift: f64) -> f64 {
        self.eval(x) * (-shift).exp()
    }
}

impl<F: Fn(f64) -> f64> ScalarFn for F {
    fn eval(&self, x: f64) -> f64 {
        self(x)
    }
}

/// `x -> cosh(scale * x)`.
#[derive(Debug, Clone, Copy)]
pub struct Cosh(pub f64);

impl ScalarFn for Cosh {
    fn eval(&self, x: f64) -> f64 {
        (self.0 * x).cosh()
    }

    fn eval_shifted(&self, x: f64, shift: f64) -> f64 {
        let y = self.0 * x;
        0.5 * ((y - shift).exp() + (-y - shift).exp())
    }
}

/// `x -> exp(scale * x)`.
#[derive(Debug, Clone, Copy)]
pub struct Exp(pub f64);

impl ScalarFn for Exp {
    fn eval(&self, x: f64) -> f64 {
        (self.0 * x).exp()
    }

    fn eval_shifted(&self, x: f64, shift: f64) -> f64 {
        (self.0 * x - shift).exp()
    }
}
