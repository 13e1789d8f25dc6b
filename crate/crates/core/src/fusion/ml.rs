use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gaussian::{check_dim, GaussianDensity};
use crate::linalg;

/// Minimum-variance linear fusion of two estimates with known cross
/// covariance `Γ_ab` (Bar-Shalom–Campo form):
///
/// ```text
/// K   = (Γ_a − Γ_ab)(Γ_a + Γ_b − Γ_ab − Γ_abᵀ)⁺
/// x_f = x_a + K (x_b − x_a)
/// Γ_f = Γ_a − K (Γ_a − Γ_ab)ᵀ
/// ```
///
/// The pseudo-inverse covers the fully redundant case, where the difference
/// covariance vanishes and `a` is returned.
pub fn fuse_ml_correlated(
    a: &GaussianDensity,
    b: &GaussianDensity,
    cross: &DMatrix<f64>,
) -> Result<GaussianDensity> {
    let n = a.dim();
    check_dim(n, b.dim())?;
    check_dim(n, cross.nrows())?;
    check_dim(n, cross.ncols())?;

    let mut joint = DMatrix::zeros(2 * n, 2 * n);
    joint.view_mut((0, 0), (n, n)).copy_from(a.cov());
    joint.view_mut((n, n), (n, n)).copy_from(b.cov());
    joint.view_mut((0, n), (n, n)).copy_from(cross);
    joint.view_mut((n, 0), (n, n)).copy_from(&cross.transpose());
    let scale = joint.amax();
    if linalg::min_eigenvalue(&joint) < -1e-9 * scale {
        return Err(Error::JointCovarianceInvalid);
    }

    let gain_left = a.cov() - cross;
    let diff_cov = linalg::symmetrized(a.cov() + b.cov() - cross - cross.transpose());
    let gain = &gain_left * linalg::pinv_symmetric(&diff_cov);
    let mean = a.mean() + &gain * (b.mean() - a.mean());
    let cov = linalg::symmetrized(a.cov() - &gain * gain_left.transpose());
    linalg::cholesky(&cov)?;
    Ok(GaussianDensity::from_parts(mean, cov))
}
