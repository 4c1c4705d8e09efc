//! Small dense solves for the symmetric systems used by the estimators.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: matrix {matrix}, right-hand side {rhs}")]
    Dimension { matrix: usize, rhs: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("pseudo-inverse failed to converge")]
    SvdFailed,
}

/// Relative singular-value cutoff for the pseudo-inverse fallback.
pub const PINV_RCOND: f64 = 1e-12;

fn check(m: &DMatrix<f64>) -> Result<(), LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    Ok(())
}

fn pinv(m: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = if smax > 0.0 { smax * PINV_RCOND } else { 0.0 };
    svd.pseudo_inverse(eps).map_err(|_| LinalgError::SvdFailed)
}

/// Solves `m x = rhs` for symmetric `m`: Cholesky first, pseudo-inverse when
/// the factorization fails.
pub fn solve_symmetric(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
    check(m)?;
    if rhs.len() != m.nrows() {
        return Err(LinalgError::Dimension { matrix: m.nrows(), rhs: rhs.len() });
    }
    match m.clone().cholesky() {
        Some(ch) => Ok(ch.solve(rhs)),
        None => Ok(pinv(m)? * rhs),
    }
}

/// Inverse of a symmetric matrix, with the same fallback as
/// [`solve_symmetric`].
pub fn inverse_symmetric(m: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    check(m)?;
    match m.clone().cholesky() {
        Some(ch) => {
            let inv = ch.inverse();
            // symmetrize away rounding asymmetry
            Ok((&inv + inv.transpose()) * 0.5)
        }
        None => pinv(m),
    }
}
