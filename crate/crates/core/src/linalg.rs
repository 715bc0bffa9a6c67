//! Small dense linear-algebra helpers shared by every filter.
//!
//! All covariance-like matrices in this crate are symmetric, so inversion goes
//! through a symmetric eigendecomposition: it yields the 2-norm condition
//! number for free and doubles as the PSD check.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest condition number accepted before a matrix is declared singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Relative asymmetry tolerated before a matrix is rejected as non-symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Eigenvalues down to `-PSD_TOL * trace` still count as nonnegative.
pub const PSD_TOL: f64 = 1e-10;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Max absolute asymmetry relative to the largest entry.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    (m - m.transpose()).amax() / scale
}

pub fn is_square(m: &DMatrix<f64>, n: usize) -> bool {
    m.nrows() == n && m.ncols() == n
}

/// Symmetric and positive semidefinite within the tolerances above.
pub fn is_psd(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() || asymmetry(m) > SYMMETRY_TOL || m.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let floor = -tol * m.trace().abs().max(f64::MIN_POSITIVE);
    eig.eigenvalues.iter().all(|&l| l >= floor)
}

pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    m.is_square() && asymmetry(m) <= SYMMETRY_TOL && m.clone().cholesky().is_some()
}

/// Inverse of a symmetric positive definite matrix with a condition guard.
pub fn spd_inverse(m: &DMatrix<f64>, name: &'static str) -> Result<DMatrix<f64>> {
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 0.0) || !max.is_finite() {
        return Err(Error::Singular {
            matrix: name,
            condition: f64::INFINITY,
        });
    }
    let condition = max / min;
    if condition > MAX_CONDITION {
        return Err(Error::Singular {
            matrix: name,
            condition,
        });
    }
    let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l));
    let inv = &eig.eigenvectors * inv_diag * eig.eigenvectors.transpose();
    Ok(symmetrize(&inv))
}

/// Symmetric square root of a PSD matrix; tiny negative eigenvalues clamp to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if !is_psd(m, PSD_TOL) {
        return None;
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let root = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    Some(&eig.eigenvectors * root * eig.eigenvectors.transpose())
}

/// Determinant of a symmetric matrix via its eigenvalues.
pub fn sym_det(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.product()
}
