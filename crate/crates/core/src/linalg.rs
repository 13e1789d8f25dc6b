//! Small dense linear-algebra helpers for symmetric positive-definite matrices.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative tolerance for the symmetry check.
pub const SYMMETRY_TOL: f64 = 1e-9;
/// Eigenvalues below `EIGEN_FLOOR * max(diag)` are treated as singular.
pub const EIGEN_FLOOR: f64 = 1e-12;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Replaces `m` by `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn symmetrized(mut m: DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&mut m);
    m
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            actual: m.ncols(),
        });
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let asymmetry = max_asymmetry(m);
    if asymmetry > SYMMETRY_TOL * scale || !asymmetry.is_finite() {
        return Err(Error::NotSymmetric { asymmetry });
    }
    Ok(())
}

/// Cholesky factorisation; failure means the matrix is not positive definite.
pub fn cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite);
    }
    Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite)
}

pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(symmetrized(cholesky(m)?.inverse()))
}

/// `log |m|` from a Cholesky factor.
pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// `dᵀ m⁻¹ d` using a Cholesky factor of `m`.
pub fn mahalanobis_sq(chol: &Cholesky<f64, Dyn>, d: &DVector<f64>) -> f64 {
    let l = chol.l_dirty();
    let n = d.len();
    // forward substitution on the lower triangle only
    let mut y = d.clone();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y.norm_squared()
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrized(m.clone()))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Principal square root of a symmetric positive semi-definite matrix.
pub fn sqrtm_spd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrized(m.clone()));
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    symmetrized(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Full SPD validation: square, symmetric, factorisable and not near-singular.
pub fn assert_spd(m: &DMatrix<f64>) -> Result<()> {
    check_symmetric(m)?;
    cholesky(m)?;
    let max_diag = m.diagonal().amax();
    let min_eig = min_eigenvalue(m);
    if min_eig <= EIGEN_FLOOR * max_diag {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(())
}

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix.
pub fn pinv_symmetric(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrized(m.clone()));
    let cutoff = eig.eigenvalues.amax() * 1e-10;
    let inv = eig
        .eigenvalues
        .map(|v| if v > cutoff { 1.0 / v } else { 0.0 });
    symmetrized(&eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose())
}
