use nalgebra::{DMatrix, DVector};

use super::measurement::Measurement;
use super::motion::MotionModel;
use crate::error::{Error, Result};
use crate::gaussian::{check_dim, GaussianDensity};
use crate::linalg::{self, LN_2PI};

/// Time update: `x ← F x`, `P ← F P Fᵀ + Q`.
pub fn ekf_predict(track: &GaussianDensity, model: &MotionModel) -> Result<GaussianDensity> {
    check_dim(model.state_dim(), track.dim())?;
    let (f, q) = model.matrices();
    let mean = &f * track.mean();
    let cov = &f * track.cov() * f.transpose() + q;
    Ok(GaussianDensity::from_parts(mean, cov))
}

/// Measurement update with the Joseph-stabilised covariance form.
pub fn ekf_update(
    track: &GaussianDensity,
    model: &impl Measurement,
    z: &DVector<f64>,
) -> Result<GaussianDensity> {
    Ok(ekf_update_with_likelihood(track, model, z)?.0)
}

/// As [`ekf_update`], also returning the innovation log-likelihood
/// `log N(ν; 0, S)`.
pub fn ekf_update_with_likelihood(
    track: &GaussianDensity,
    model: &impl Measurement,
    z: &DVector<f64>,
) -> Result<(GaussianDensity, f64)> {
    check_dim(model.meas_dim(), z.len())?;
    let n = track.dim();
    let x = track.mean();
    let p = track.cov();
    let h = model.jacobian(x, n)?;
    let nu = model.innovation(z, &model.predict(x)?);
    let r = model.noise();
    let s = linalg::symmetrized(&h * p * h.transpose() + &r);
    let s_chol = linalg::cholesky(&s).map_err(|_| Error::SingularInnovation)?;
    let pht = p * h.transpose();
    // K = P Hᵀ S⁻¹, solved as S Kᵀ = H P
    let gain = s_chol.solve(&pht.transpose()).transpose();
    let mean = x + &gain * &nu;
    let i_kh = DMatrix::identity(n, n) - &gain * &h;
    let cov = &i_kh * p * i_kh.transpose() + &gain * r * gain.transpose();
    let log_lik = -0.5
        * (nu.len() as f64 * LN_2PI
            + linalg::log_det(&s_chol)
            + linalg::mahalanobis_sq(&s_chol, &nu));
    Ok((GaussianDensity::from_parts(mean, cov), log_lik))
}
