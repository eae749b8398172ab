use super::{eig_h, DenseOperator};
use crate::error::Result;

/// Sum of singular values. No factor 1/2: two orthogonal pure states are at
/// trace-norm distance 2, not 1.
pub fn trace_norm(a: &DenseOperator) -> f64 {
    if a.is_hermitian() {
        if let Ok(s) = eig_h(a) {
            return s.eigenvalues().iter().map(|e| e.abs()).sum();
        }
    }
    a.matrix().clone().singular_values().iter().sum()
}

/// Largest singular value.
pub fn operator_norm(a: &DenseOperator) -> f64 {
    if a.is_hermitian() {
        if let Ok(s) = eig_h(a) {
            return s.max_abs();
        }
    }
    a.matrix()
        .clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// `||a - b||_1`, unhalved.
pub fn trace_distance(a: &DenseOperator, b: &DenseOperator) -> f64 {
    trace_norm(&a.sub(b))
}

const DENSITY_TOL: f64 = 1e-8;

fn psd_sqrt(a: &DenseOperator) -> Result<DenseOperator> {
    let s = eig_h(&DenseOperator::hermitian_part(a.matrix().clone()))?;
    // eigenvalues at rounding level are zeros; their square roots are not small
    let floor = s.dim() as f64 * f64::EPSILON * s.max_abs();
    s.apply(&move |x: f64| if x > floor { x.sqrt() } else { 0.0 }, None)
}

/// Root fidelity `tr sqrt(sqrt(rho) sigma sqrt(rho)) = ||sqrt(rho) sqrt(sigma)||_1`.
pub fn fidelity(rho: &DenseOperator, sigma: &DenseOperator) -> Result<f64> {
    rho.check_density(DENSITY_TOL)?;
    sigma.check_density(DENSITY_TOL)?;
    let product = psd_sqrt(rho)?.matmul(&psd_sqrt(sigma)?);
    let f: f64 = product.into_matrix().singular_values().iter().sum();
    Ok(f.min(1.0))
}
