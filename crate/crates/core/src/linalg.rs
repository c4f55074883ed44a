//! Small dense linear-algebra helpers shared by the filter and smoother.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let mut s = m.clone();
    symmetrize(&mut s);
    SymmetricEigen::new(s).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn is_symmetric_psd(m: &DMatrix<f64>, rel: f64) -> bool {
    if m.nrows() != m.ncols() || m.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * scale.max(f64::MIN_POSITIVE) {
                return false;
            }
        }
    }
    min_eigenvalue(m) >= -rel * m.trace().abs()
}

/// Inverse of a symmetric positive-definite matrix, `None` when Cholesky fails
/// or the reciprocal condition estimate is below `1e-14`.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let mut s = m.clone();
    symmetrize(&mut s);
    let diag_max = s.diagonal().iter().fold(0.0f64, |a, v| a.max(*v));
    let diag_min = s.diagonal().iter().fold(f64::INFINITY, |a, v| a.min(*v));
    if !(diag_max > 0.0) || !(diag_min > 0.0) {
        return None;
    }
    let chol = s.cholesky()?;
    let l = chol.l();
    let ratio = l.diagonal().iter().fold(f64::INFINITY, |a, v| a.min(v.abs()))
        / l.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(ratio * ratio > 1e-14) {
        return None;
    }
    Some(chol.inverse())
}

/// Quadratic form `vᵀ M⁻¹ v` for SPD `M`.
pub fn mahalanobis_sq(v: &DVector<f64>, m: &DMatrix<f64>) -> Option<f64> {
    let inv = spd_inverse(m)?;
    Some(v.dot(&(&inv * v)))
}

pub fn diag(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_row_slice(values))
}
