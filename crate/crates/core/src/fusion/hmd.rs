//! Harmonic mean density (HMD) fusion.
//!
//! The exact pooled density is `a·b / (ω·a + (1−ω)·b)` up to normalisation.
//! The closed-form implementation replaces the arithmetic-mean denominator by
//! its moment-matched Gaussian `N(x_eq, Γ_eq)` and divides the product of the
//! inputs by it:
//!
//! ```text
//! Γ_f⁻¹ = Γ_a⁻¹ + Γ_b⁻¹ − Γ_eq⁻¹
//! x_f   = Γ_f (Γ_a⁻¹ x_a + Γ_b⁻¹ x_b − Γ_eq⁻¹ x_eq)
//! ```
//!
//! `Γ_eq` dominates the product covariance `(Γ_a⁻¹ + Γ_b⁻¹)⁻¹` for any pair
//! of SPD inputs, so the subtraction stays positive definite.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{check_simplex, Diagnostics, FusionResult, FusionWeight, Strategy};
use crate::error::{Error, Result};
use crate::gaussian::{
    check_dim, log_normal_with, log_sum_exp, mixture_moments, Density, GaussianDensity,
    GaussianMixture,
};
use crate::linalg::{self, LN_2PI};
use crate::quadrature;

struct Prepared<'a> {
    g: &'a GaussianDensity,
    chol: Cholesky<f64, Dyn>,
    info: DMatrix<f64>,
    info_mean: DVector<f64>,
}

impl<'a> Prepared<'a> {
    fn new(g: &'a GaussianDensity) -> Result<Self> {
        let chol = linalg::cholesky(g.cov())?;
        let info = linalg::symmetrized(chol.inverse());
        let info_mean = &info * g.mean();
        Ok(Self {
            g,
            chol,
            info,
            info_mean,
        })
    }
}

struct Denominator {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    info: DMatrix<f64>,
    info_mean: DVector<f64>,
}

impl Denominator {
    fn from_moments(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let chol = linalg::cholesky(&cov)?;
        let info = linalg::symmetrized(chol.inverse());
        let info_mean = &info * &mean;
        Ok(Self {
            mean,
            cov,
            chol,
            info,
            info_mean,
        })
    }
}

fn not_pd(context: &str) -> Error {
    Error::NonPositiveDefiniteResult {
        context: context.to_string(),
    }
}

/// Divides the product of two prepared Gaussians by the denominator.
/// Returns the fused density and the Cholesky factor of its precision.
fn divide_pair(
    a: &Prepared,
    b: &Prepared,
    den: &Denominator,
) -> Result<(GaussianDensity, Cholesky<f64, Dyn>)> {
    let info = linalg::symmetrized(&a.info + &b.info - &den.info);
    let chol = linalg::cholesky(&info)
        .map_err(|_| not_pd("HMD denominator removes more information than the inputs hold"))?;
    let cov = chol.inverse();
    let mean = &cov * (&a.info_mean + &b.info_mean - &den.info_mean);
    Ok((GaussianDensity::from_parts(mean, cov), chol))
}

fn gaussian_parts<'a>(
    a: &'a GaussianDensity,
    b: &'a GaussianDensity,
    w: FusionWeight,
) -> Result<(Prepared<'a>, Prepared<'a>, Denominator)> {
    check_dim(a.dim(), b.dim())?;
    let pa = Prepared::new(a)?;
    let pb = Prepared::new(b)?;
    let (mean, cov) = mixture_moments(&[w.value(), w.complement()], &[a.clone(), b.clone()]);
    let den = Denominator::from_moments(mean, cov)?;
    Ok((pa, pb, den))
}

/// Closed-form Gaussian HMD without diagnostics.
pub fn hmd_fuse_gaussian(
    a: &GaussianDensity,
    b: &GaussianDensity,
    w: FusionWeight,
) -> Result<GaussianDensity> {
    check_dim(a.dim(), b.dim())?;
    let ia = linalg::spd_inverse(a.cov())?;
    let ib = linalg::spd_inverse(b.cov())?;
    let wv = w.value();
    let d = a.mean() - b.mean();
    let mean_eq = b.mean() + &d * wv;
    let mut cov_eq = a.cov() * wv + b.cov() * (1.0 - wv);
    cov_eq.ger(wv * (1.0 - wv), &d, &d, 1.0);
    let ieq = linalg::spd_inverse(&cov_eq)?;
    let chol = linalg::cholesky(&linalg::symmetrized(&ia + &ib - &ieq))
        .map_err(|_| not_pd("HMD denominator removes more information than the inputs hold"))?;
    let mean = chol.solve(&(&ia * a.mean() + &ib * b.mean() - &ieq * mean_eq));
    Ok(GaussianDensity::from_parts(mean, chol.inverse()))
}

/// Closed-form Gaussian HMD. The diagnostics carry the smallest eigenvalue
/// of `Γ_eq − Γ_num`, where `Γ_num` is the covariance of the product.
pub fn fuse_hmd(a: &GaussianDensity, b: &GaussianDensity, w: FusionWeight) -> Result<FusionResult> {
    let (pa, pb, den) = gaussian_parts(a, b, w)?;
    let num_cov = linalg::spd_inverse(&(&pa.info + &pb.info))?;
    let pd_margin = linalg::min_eigenvalue(&(&den.cov - num_cov));
    let (density, _) = divide_pair(&pa, &pb, &den)?;
    Ok(FusionResult {
        density: density.into(),
        strategy: Strategy::Hmd,
        diagnostics: Diagnostics {
            norm_const: None,
            pd_margin: Some(pd_margin),
        },
    })
}

/// Mixture HMD. The denominator is the `(M+N)`-term mixture
/// `ω·a + (1−ω)·b`, moment-matched to a single Gaussian; each component pair
/// `(i, j)` is divided by it. Output component `i·N + j` has weight
/// `αᵢ βⱼ κᵢⱼ`, renormalised.
pub fn fuse_hmd_mixture(
    a: &GaussianMixture,
    b: &GaussianMixture,
    w: FusionWeight,
) -> Result<GaussianMixture> {
    let (log_w, comps) = hmd_mixture_terms(a, b, w)?
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip::<_, _, Vec<f64>, Vec<GaussianDensity>>();
    GaussianMixture::from_log_weights(&log_w, comps)
}

/// As [`fuse_hmd_mixture`], but pairs whose division is not positive
/// definite are dropped instead of failing the whole fusion. Returns the
/// mixture and the `i·N + j` indices of the pairs that were kept; fails only
/// if no pair is valid.
pub fn fuse_hmd_mixture_partial(
    a: &GaussianMixture,
    b: &GaussianMixture,
    w: FusionWeight,
) -> Result<(GaussianMixture, Vec<usize>)> {
    let mut kept = Vec::new();
    let mut log_w = Vec::new();
    let mut comps = Vec::new();
    let mut last_err = None;
    for (idx, term) in hmd_mixture_terms(a, b, w)?.into_iter().enumerate() {
        match term {
            Ok((lw, c)) => {
                kept.push(idx);
                log_w.push(lw);
                comps.push(c);
            }
            Err(e @ Error::NonPositiveDefiniteResult { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    if kept.is_empty() {
        return Err(last_err.unwrap_or(Error::EmptyMixture));
    }
    Ok((GaussianMixture::from_log_weights(&log_w, comps)?, kept))
}

/// Per-pair `(log weight, fused component)` in `i·N + j` order.
fn hmd_mixture_terms(
    a: &GaussianMixture,
    b: &GaussianMixture,
    w: FusionWeight,
) -> Result<Vec<Result<(f64, GaussianDensity)>>> {
    check_dim(a.dim(), b.dim())?;
    let mut den_w = Vec::with_capacity(a.len() + b.len());
    let mut den_c = Vec::with_capacity(a.len() + b.len());
    for (alpha, c) in a.iter() {
        den_w.push(w.value() * alpha);
        den_c.push(c.clone());
    }
    for (beta, c) in b.iter() {
        den_w.push(w.complement() * beta);
        den_c.push(c.clone());
    }
    let (mean, cov) = mixture_moments(&den_w, &den_c);
    let den = Denominator::from_moments(mean, cov)?;

    let pa = a
        .components()
        .iter()
        .map(Prepared::new)
        .collect::<Result<Vec<_>>>()?;
    let pb = b
        .components()
        .iter()
        .map(Prepared::new)
        .collect::<Result<Vec<_>>>()?;

    let n = a.dim() as f64;
    let mut terms = Vec::with_capacity(pa.len() * pb.len());
    for (alpha, ci) in a.weights().iter().zip(&pa) {
        for (beta, cj) in b.weights().iter().zip(&pb) {
            terms.push(divide_pair(ci, cj, &den).map(|(fused, info_chol)| {
                let x = fused.mean();
                // κ from the pointwise identity Nᵢ(x) Nⱼ(x) / N_eq(x) = κ N_f(x) at x = x_f
                let log_peak = -0.5 * (n * LN_2PI - linalg::log_det(&info_chol));
                let log_kappa = log_normal_with(&ci.chol, ci.g.mean(), x)
                    + log_normal_with(&cj.chol, cj.g.mean(), x)
                    - log_normal_with(&den.chol, &den.mean, x)
                    - log_peak;
                (alpha.ln() + beta.ln() + log_kappa, fused)
            }));
        }
    }
    Ok(terms)
}

/// Sequential HMD over `n ≥ 2` Gaussians. `weights` are harmonic weights:
/// the exact pool satisfies `1/M = Σ ωᵢ / pᵢ`. Step `k` fuses the running
/// result with input `k` at `ω = ωₖ / (ω₁ + … + ωₖ)`.
pub fn fuse_hmd_recursive(inputs: &[GaussianDensity], weights: &[f64]) -> Result<FusionResult> {
    if inputs.len() < 2 {
        return Err(Error::InvalidWeight(
            "recursive HMD needs at least two inputs".into(),
        ));
    }
    check_dim(inputs.len(), weights.len())?;
    check_simplex(weights)?;
    let mut fused = inputs[0].clone();
    let mut cumulative = weights[0];
    let mut margin = f64::INFINITY;
    for (g, wk) in inputs[1..].iter().zip(&weights[1..]) {
        cumulative += wk;
        let step_w = if cumulative > 0.0 {
            wk / cumulative
        } else {
            0.5
        };
        let step = fuse_hmd(&fused, g, FusionWeight::new(step_w.clamp(0.0, 1.0))?)?;
        margin = margin.min(step.diagnostics.pd_margin.unwrap_or(f64::INFINITY));
        fused = match step.density {
            Density::Gaussian(g) => g,
            Density::Mixture(_) => unreachable!("Gaussian HMD returns a Gaussian"),
        };
    }
    Ok(FusionResult {
        density: fused.into(),
        strategy: Strategy::Hmd,
        diagnostics: Diagnostics {
            norm_const: None,
            pd_margin: Some(margin),
        },
    })
}

/// `log[a·b / (ω·a + (1−ω)·b)]` from the log-densities.
pub fn hmd_unnormalized_log(log_a: f64, log_b: f64, w: f64) -> f64 {
    let mut terms = Vec::with_capacity(2);
    if w > 0.0 {
        terms.push(w.ln() + log_a);
    }
    if w < 1.0 {
        terms.push((1.0 - w).ln() + log_b);
    }
    let den = log_sum_exp(&terms);
    if !den.is_finite() {
        return f64::NEG_INFINITY;
    }
    log_a + log_b - den
}

/// Exact (unnormalised) two-density harmonic pool evaluated at `x`.
pub fn hmd_unnormalized(
    a: &Density,
    b: &Density,
    w: FusionWeight,
    x: &DVector<f64>,
) -> Result<f64> {
    Ok(hmd_unnormalized_log(a.log_eval(x)?, b.log_eval(x)?, w.value()).exp())
}

/// Exact `n`-density weighted harmonic mean of pointwise values:
/// `1 / Σ ωᵢ / pᵢ`.
pub fn hmd_weighted_unnormalized(values: &[f64], weights: &[f64]) -> f64 {
    let s: f64 = values
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(p, w)| w / p)
        .sum();
    1.0 / s
}

/// Normalising constant `ζ = ∫ a·b / (ω·a + (1−ω)·b) dx` by quadrature
/// (1D and 2D inputs only).
pub fn hmd_norm_const(a: &Density, b: &Density, w: FusionWeight) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    let bounds = quadrature::bounding_box(&[a, b], 12.0);
    let wv = w.value();
    let f = |x: &[f64]| {
        let x = DVector::from_column_slice(x);
        match (a.log_eval(&x), b.log_eval(&x)) {
            (Ok(la), Ok(lb)) => hmd_unnormalized_log(la, lb, wv).exp(),
            _ => f64::NAN,
        }
    };
    quadrature::integrate_box(f, &bounds, 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn s(m: f64, v: f64) -> GaussianDensity {
        GaussianDensity::scalar(m, v).unwrap()
    }

    fn gaussian(d: &Density) -> &GaussianDensity {
        match d {
            Density::Gaussian(g) => g,
            _ => panic!("expected Gaussian"),
        }
    }

    #[test]
    fn scalar_pair() {
        let r = fuse_hmd(&s(50.0, 10.0), &s(-30.0, 20.0), FusionWeight::HALF).unwrap();
        let g = gaussian(&r.density);
        assert!((g.mean()[0] - 23.39).abs() < 0.01);
        assert!((g.cov()[(0, 0)] - 6.69).abs() < 0.01);
        assert!(r.diagnostics.pd_margin.unwrap() > 0.0);
    }

    #[test]
    fn unit_weight_returns_second() {
        let a = GaussianDensity::from_slices(&[1.0, 3.0], &[100.0, 10.0, 10.0, 80.0]).unwrap();
        let b = GaussianDensity::from_slices(&[7.0, 10.0], &[50.0, -5.0, -5.0, 40.0]).unwrap();
        let f = hmd_fuse_gaussian(&a, &b, FusionWeight::new(1.0).unwrap()).unwrap();
        assert_relative_eq!(f.mean(), b.mean(), max_relative = 1e-9);
        assert_relative_eq!(f.cov(), b.cov(), max_relative = 1e-9);
    }

    #[test]
    fn equal_means_match_inverse_covariance_intersection() {
        let a = GaussianDensity::from_slices(&[2.0, -1.0], &[9.0, 2.0, 2.0, 4.0]).unwrap();
        let b = GaussianDensity::from_slices(&[2.0, -1.0], &[3.0, -1.0, -1.0, 6.0]).unwrap();
        let w = 0.3;
        let f = hmd_fuse_gaussian(&a, &b, FusionWeight::new(w).unwrap()).unwrap();
        let ici = a.cov() * w + b.cov() * (1.0 - w);
        let info =
            a.precision().unwrap() + b.precision().unwrap() - linalg::spd_inverse(&ici).unwrap();
        let expected = linalg::spd_inverse(&info).unwrap();
        assert_relative_eq!(f.cov(), &expected, max_relative = 1e-10);
        assert_relative_eq!(f.mean(), a.mean(), max_relative = 1e-10);
    }

    #[test]
    fn self_fusion_is_identity() {
        let a = GaussianDensity::from_slices(&[2.0, -1.0], &[9.0, 2.0, 2.0, 4.0]).unwrap();
        for w in [0.0, 0.2, 0.5, 0.9, 1.0] {
            let f = hmd_fuse_gaussian(&a, &a, FusionWeight::new(w).unwrap()).unwrap();
            assert_relative_eq!(f.mean(), a.mean(), max_relative = 1e-9);
            assert_relative_eq!(f.cov(), a.cov(), max_relative = 1e-9);
        }
    }

    #[test]
    fn mixture_single_components_match_gaussian() {
        let a = s(50.0, 10.0);
        let b = s(-30.0, 20.0);
        let m = fuse_hmd_mixture(&a.clone().into(), &b.clone().into(), FusionWeight::HALF).unwrap();
        let g = hmd_fuse_gaussian(&a, &b, FusionWeight::HALF).unwrap();
        assert_eq!(m.len(), 1);
        assert_relative_eq!(m.components()[0].mean(), g.mean(), max_relative = 1e-12);
        assert_relative_eq!(m.components()[0].cov(), g.cov(), max_relative = 1e-12);
    }

    #[test]
    fn mixture_weights_normalised() {
        let a = GaussianMixture::new(vec![0.7, 0.3], vec![s(0.0, 4.0), s(3.0, 2.0)]).unwrap();
        let b = GaussianMixture::new(vec![0.4, 0.6], vec![s(1.0, 3.0), s(-1.0, 5.0)]).unwrap();
        let m = fuse_hmd_mixture(&a, &b, FusionWeight::HALF).unwrap();
        assert_eq!(m.len(), 4);
        assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn recursive_two_inputs_equal_pairwise() {
        let a = s(5.0, 3.0);
        let b = s(-1.0, 7.0);
        let r = fuse_hmd_recursive(&[a.clone(), b.clone()], &[0.5, 0.5]).unwrap();
        let p = hmd_fuse_gaussian(&a, &b, FusionWeight::HALF).unwrap();
        assert_eq!(gaussian(&r.density), &p);
    }

    #[test]
    fn recursive_degenerate_weights_return_first() {
        let inputs = [s(5.0, 3.0), s(-1.0, 7.0), s(2.0, 1.0)];
        let r = fuse_hmd_recursive(&inputs, &[1.0 - 2e-12, 1e-12, 1e-12]).unwrap();
        let g = gaussian(&r.density);
        assert!((g.mean()[0] - 5.0).abs() < 1e-6);
        assert!((g.cov()[(0, 0)] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn recursive_needs_two_inputs() {
        assert!(fuse_hmd_recursive(&[s(0.0, 1.0)], &[1.0]).is_err());
    }

    #[test]
    fn norm_const_endpoints_and_identical() {
        let a: Density = s(1.0, 100.0).into();
        let b: Density = s(7.0, 50.0).into();
        for w in [0.0, 1.0] {
            let z = hmd_norm_const(&a, &b, FusionWeight::new(w).unwrap()).unwrap();
            assert!((z - 1.0).abs() < 1e-6, "w={w}: {z}");
        }
        let z = hmd_norm_const(&a, &a, FusionWeight::new(0.37).unwrap()).unwrap();
        assert!((z - 1.0).abs() < 1e-6);
    }

    #[test]
    fn unnormalized_log_endpoints() {
        assert_relative_eq!(hmd_unnormalized_log(-1.0, -3.0, 1.0), -3.0);
        assert_relative_eq!(hmd_unnormalized_log(-1.0, -3.0, 0.0), -1.0);
    }
}
