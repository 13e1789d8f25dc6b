use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::gaussian::{check_dim, GaussianDensity};
use crate::linalg;

/// Chi-square 95% quantile for `dim` degrees of freedom.
pub fn default_gate_threshold(dim: usize) -> f64 {
    ChiSquared::new(dim as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.95)
}

/// Track-to-track association test:
/// `(x_a − x_b)ᵀ (Γ_a + Γ_b − Γ_ab − Γ_abᵀ)⁻¹ (x_a − x_b) ≤ γ`
/// with the cross-covariance modelled as `Γ_ab = ρ √Γ_a √Γ_b`.
pub fn association_gate(
    a: &GaussianDensity,
    b: &GaussianDensity,
    gamma: f64,
    rho: f64,
) -> Result<bool> {
    check_dim(a.dim(), b.dim())?;
    if !(gamma > 0.0) {
        return Err(Error::InvalidWeight(format!(
            "gate threshold must be positive, got {gamma}"
        )));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidWeight(format!(
            "correlation must lie in [0, 1], got {rho}"
        )));
    }
    let cross = linalg::sqrtm_spd(a.cov()) * linalg::sqrtm_spd(b.cov()) * rho;
    let gate = linalg::symmetrized(a.cov() + b.cov() - &cross - cross.transpose());
    let chol = linalg::cholesky(&gate).map_err(|_| Error::GateMatrixInvalid)?;
    let d = a.mean() - b.mean();
    Ok(linalg::mahalanobis_sq(&chol, &d) <= gamma)
}
