use nalgebra::{DMatrix, DVector};

use super::{check_simplex, FusionWeight};
use crate::error::{Error, Result};
use crate::gaussian::{
    check_dim, gaussian_product, scaled_power, Density, GaussianDensity, GaussianMixture,
};
use crate::linalg;

/// Product of the two densities, renormalised. Treats the inputs as
/// independent and therefore counts any shared information twice.
pub fn fuse_naive(a: &GaussianDensity, b: &GaussianDensity) -> Result<GaussianDensity> {
    fuse_naive_many(&[a, b])
}

pub fn fuse_naive_many(inputs: &[&GaussianDensity]) -> Result<GaussianDensity> {
    let weights = vec![1.0; inputs.len()];
    information_sum(inputs, &weights)
}

/// `Γ = (Σ wᵢ Γᵢ⁻¹)⁻¹`, `x = Γ Σ wᵢ Γᵢ⁻¹ xᵢ`.
fn information_sum(inputs: &[&GaussianDensity], weights: &[f64]) -> Result<GaussianDensity> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::InvalidWeight("no inputs to fuse".into()))?;
    let n = first.dim();
    let mut info = DMatrix::zeros(n, n);
    let mut info_mean = DVector::zeros(n);
    for (g, w) in inputs.iter().zip(weights) {
        check_dim(n, g.dim())?;
        if *w == 0.0 {
            continue;
        }
        let p = g.precision()?;
        info_mean += (&p * g.mean()) * *w;
        info += p * *w;
    }
    let cov = linalg::spd_inverse(&info)?;
    let mean = &cov * info_mean;
    Ok(GaussianDensity::from_parts(mean, cov))
}

/// Covariance intersection (closed-form geometric mean of two Gaussians).
pub fn fuse_gmd(
    a: &GaussianDensity,
    b: &GaussianDensity,
    w: FusionWeight,
) -> Result<GaussianDensity> {
    check_dim(a.dim(), b.dim())?;
    if w.value() == 1.0 {
        return Ok(a.clone());
    }
    if w.value() == 0.0 {
        return Ok(b.clone());
    }
    information_sum(&[a, b], &[w.value(), w.complement()])
}

/// Covariance intersection over `n` inputs with simplex weights.
pub fn fuse_gmd_many(inputs: &[&GaussianDensity], weights: &[f64]) -> Result<GaussianDensity> {
    check_simplex(weights)?;
    check_dim(inputs.len(), weights.len())?;
    information_sum(inputs, weights)
}

/// Weighted arithmetic mixture of the inputs, returned unreduced.
pub fn fuse_amd(inputs: &[Density], weights: &[f64]) -> Result<GaussianMixture> {
    check_dim(inputs.len(), weights.len())?;
    check_simplex(weights)?;
    let dim = inputs[0].dim();
    let mut out_w = Vec::new();
    let mut out_c = Vec::new();
    for (d, w) in inputs.iter().zip(weights) {
        check_dim(dim, d.dim())?;
        for (cw, c) in d.to_mixture().iter() {
            out_w.push(w * cw);
            out_c.push(c.clone());
        }
    }
    GaussianMixture::new(out_w, out_c)
}

/// Term-by-term product of two mixtures (naive fusion of mixtures).
pub fn fuse_naive_mixture(a: &GaussianMixture, b: &GaussianMixture) -> Result<GaussianMixture> {
    check_dim(a.dim(), b.dim())?;
    let mut log_w = Vec::with_capacity(a.len() * b.len());
    let mut comps = Vec::with_capacity(a.len() * b.len());
    for (wa, ca) in a.iter() {
        for (wb, cb) in b.iter() {
            let p = gaussian_product(ca, cb)?;
            log_w.push(wa.ln() + wb.ln() + p.log_scale);
            comps.push(p.density);
        }
    }
    GaussianMixture::from_log_weights(&log_w, comps)
}

/// Pseudo-Chernoff fusion: each mixture is raised to its power component by
/// component, `[Σ μᵢ Nᵢ]^ω ≈ Σ μᵢ^ω Nᵢ^ω`, and the powered mixtures are
/// multiplied term by term.
pub fn fuse_pcf(
    a: &GaussianMixture,
    b: &GaussianMixture,
    w: FusionWeight,
) -> Result<GaussianMixture> {
    check_dim(a.dim(), b.dim())?;
    if w.value() == 1.0 {
        return Ok(a.clone());
    }
    if w.value() == 0.0 {
        return Ok(b.clone());
    }
    let power = |m: &GaussianMixture, e: f64| -> Result<Vec<(f64, GaussianDensity)>> {
        m.iter()
            .map(|(mu, c)| {
                let p = scaled_power(c, e)?;
                Ok((e * mu.ln() + p.log_scale, p.density))
            })
            .collect()
    };
    let pa = power(a, w.value())?;
    let pb = power(b, w.complement())?;
    let mut log_w = Vec::with_capacity(pa.len() * pb.len());
    let mut comps = Vec::with_capacity(pa.len() * pb.len());
    for (la, ca) in &pa {
        for (lb, cb) in &pb {
            let p = gaussian_product(ca, cb)?;
            log_w.push(la + lb + p.log_scale);
            comps.push(p.density);
        }
    }
    GaussianMixture::from_log_weights(&log_w, comps)
}
