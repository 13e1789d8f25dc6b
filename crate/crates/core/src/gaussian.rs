//! Gaussian and Gaussian-mixture density algebra.
//!
//! Densities are carried in moment form (mean, covariance). Every operation
//! that produces a covariance symmetrises it before returning, and products,
//! divisions and powers report their normalising factor in log space so that
//! widely separated components do not underflow.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, LN_2PI};

/// Mean vector plus symmetric positive-definite covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GaussianRepr", into = "GaussianRepr")]
pub struct GaussianDensity {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct GaussianRepr {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

impl TryFrom<GaussianRepr> for GaussianDensity {
    type Error = Error;

    fn try_from(r: GaussianRepr) -> Result<Self> {
        let n = r.mean.len();
        if r.cov.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: r.cov.len(),
            });
        }
        if let Some(row) = r.cov.iter().find(|row| row.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: row.len(),
            });
        }
        let cov = DMatrix::from_fn(n, n, |i, j| r.cov[i][j]);
        GaussianDensity::new(DVector::from_vec(r.mean), cov)
    }
}

impl From<GaussianDensity> for GaussianRepr {
    fn from(g: GaussianDensity) -> Self {
        let n = g.dim();
        GaussianRepr {
            mean: g.mean.iter().copied().collect(),
            cov: (0..n)
                .map(|i| g.cov.row(i).iter().copied().collect())
                .collect(),
        }
    }
}

impl GaussianDensity {
    /// Validated constructor: the covariance must be symmetric (within a
    /// relative 1e-9) and positive definite.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                actual: cov.nrows(),
            });
        }
        linalg::assert_spd(&cov)?;
        Ok(Self::from_parts(mean, cov))
    }

    pub fn from_slices(mean: &[f64], cov_row_major: &[f64]) -> Result<Self> {
        let n = mean.len();
        if cov_row_major.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                actual: cov_row_major.len(),
            });
        }
        Self::new(
            DVector::from_column_slice(mean),
            DMatrix::from_row_slice(n, n, cov_row_major),
        )
    }

    pub fn scalar(mean: f64, var: f64) -> Result<Self> {
        Self::from_slices(&[mean], &[var])
    }

    /// Unvalidated constructor for results whose positive definiteness was
    /// already established by a successful factorisation.
    pub(crate) fn from_parts(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self {
            mean,
            cov: linalg::symmetrized(cov),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn into_parts(self) -> (DVector<f64>, DMatrix<f64>) {
        (self.mean, self.cov)
    }

    pub fn precision(&self) -> Result<DMatrix<f64>> {
        linalg::spd_inverse(&self.cov)
    }

    pub fn log_eval(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let chol = linalg::cholesky(&self.cov)?;
        Ok(log_normal_with(&chol, &self.mean, x))
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.log_eval(x)?.exp())
    }

    /// Marginal over the leading `n` state components.
    pub fn marginal_head(&self, n: usize) -> Self {
        Self::from_parts(
            self.mean.rows(0, n).into_owned(),
            self.cov.view((0, 0), (n, n)).into_owned(),
        )
    }
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

pub(crate) fn log_normal_with(
    chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
    mean: &DVector<f64>,
    x: &DVector<f64>,
) -> f64 {
    let d = x - mean;
    let n = d.len() as f64;
    -0.5 * (n * LN_2PI + linalg::log_det(chol) + linalg::mahalanobis_sq(chol, &d))
}

/// Weighted list of Gaussian components of equal dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureRepr", into = "MixtureRepr")]
pub struct GaussianMixture {
    weights: Vec<f64>,
    components: Vec<GaussianDensity>,
}

#[derive(Serialize, Deserialize)]
struct MixtureRepr {
    weights: Vec<f64>,
    components: Vec<GaussianDensity>,
}

impl TryFrom<MixtureRepr> for GaussianMixture {
    type Error = Error;

    fn try_from(r: MixtureRepr) -> Result<Self> {
        GaussianMixture::new(r.weights, r.components)
    }
}

impl From<GaussianMixture> for MixtureRepr {
    fn from(m: GaussianMixture) -> Self {
        MixtureRepr {
            weights: m.weights,
            components: m.components,
        }
    }
}

impl GaussianMixture {
    /// Builds a mixture and normalises the weights to sum to one.
    pub fn new(weights: Vec<f64>, components: Vec<GaussianDensity>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyMixture);
        }
        check_dim(components.len(), weights.len())?;
        let dim = components[0].dim();
        for c in &components[1..] {
            check_dim(dim, c.dim())?;
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidWeight(
                "mixture weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidWeight("mixture weights sum to zero".into()));
        }
        Ok(Self {
            weights: weights.iter().map(|w| w / total).collect(),
            components,
        })
    }

    /// Builds a mixture from unnormalised log-weights.
    pub fn from_log_weights(log_weights: &[f64], components: Vec<GaussianDensity>) -> Result<Self> {
        let max = log_weights
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::InvalidWeight(
                "all mixture log-weights are -inf".into(),
            ));
        }
        let weights = log_weights.iter().map(|lw| (lw - max).exp()).collect();
        Self::new(weights, components)
    }

    pub fn single(g: GaussianDensity) -> Self {
        Self {
            weights: vec![1.0],
            components: vec![g],
        }
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GaussianDensity] {
        &self.components
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &GaussianDensity)> {
        self.weights.iter().copied().zip(self.components.iter())
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<GaussianDensity>) {
        (self.weights, self.components)
    }

    pub fn log_eval(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let terms = self
            .iter()
            .filter(|(w, _)| *w > 0.0)
            .map(|(w, c)| Ok(w.ln() + c.log_eval(x)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(log_sum_exp(&terms))
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.log_eval(x)?.exp())
    }
}

impl From<GaussianDensity> for GaussianMixture {
    fn from(g: GaussianDensity) -> Self {
        Self::single(g)
    }
}

pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Either a single Gaussian or a mixture. Serialises to the matching JSON
/// object shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Density {
    Mixture(GaussianMixture),
    Gaussian(GaussianDensity),
}

impl Density {
    pub fn dim(&self) -> usize {
        match self {
            Density::Gaussian(g) => g.dim(),
            Density::Mixture(m) => m.dim(),
        }
    }

    pub fn log_eval(&self, x: &DVector<f64>) -> Result<f64> {
        match self {
            Density::Gaussian(g) => g.log_eval(x),
            Density::Mixture(m) => m.log_eval(x),
        }
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.log_eval(x)?.exp())
    }

    pub fn to_mixture(&self) -> GaussianMixture {
        match self {
            Density::Gaussian(g) => GaussianMixture::single(g.clone()),
            Density::Mixture(m) => m.clone(),
        }
    }

    /// Single-Gaussian summary (moment match for mixtures).
    pub fn to_gaussian(&self) -> Result<GaussianDensity> {
        match self {
            Density::Gaussian(g) => Ok(g.clone()),
            Density::Mixture(m) => moment_match(m),
        }
    }
}

impl From<GaussianDensity> for Density {
    fn from(g: GaussianDensity) -> Self {
        Density::Gaussian(g)
    }
}

impl From<GaussianMixture> for Density {
    fn from(m: GaussianMixture) -> Self {
        Density::Mixture(m)
    }
}

/// A Gaussian multiplied by a nonnegative constant. The constant is stored
/// as its logarithm.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledGaussian {
    pub log_scale: f64,
    pub density: GaussianDensity,
}

impl ScaledGaussian {
    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        Ok((self.log_scale + self.density.log_eval(x)?).exp())
    }
}

/// `a(x) b(x) = scale · N(x; m, P)` with `P⁻¹ = A⁻¹ + B⁻¹` and
/// `scale = N(b.mean; a.mean, A + B)`.
pub fn gaussian_product(a: &GaussianDensity, b: &GaussianDensity) -> Result<ScaledGaussian> {
    check_dim(a.dim(), b.dim())?;
    let ia = a.precision()?;
    let ib = b.precision()?;
    let info = &ia + &ib;
    let chol = linalg::cholesky(&info)?;
    let cov = linalg::symmetrized(chol.inverse());
    let mean = &cov * (&ia * &a.mean + &ib * &b.mean);
    let sum_chol = linalg::cholesky(&(&a.cov + &b.cov))?;
    let log_scale = log_normal_with(&sum_chol, &a.mean, &b.mean);
    Ok(ScaledGaussian {
        log_scale,
        density: GaussianDensity::from_parts(mean, cov),
    })
}

/// `num(x) / den(x) = scale · N(x; m, P)` with `P⁻¹ = Num⁻¹ − Den⁻¹`.
///
/// Valid only when `Den − Num` is positive definite; otherwise the
/// subtraction removes more information than the numerator holds.
pub fn gaussian_division(num: &GaussianDensity, den: &GaussianDensity) -> Result<ScaledGaussian> {
    check_dim(num.dim(), den.dim())?;
    let inum = num.precision()?;
    let iden = den.precision()?;
    let info = linalg::symmetrized(&inum - &iden);
    let chol = linalg::cholesky(&info).map_err(|_| Error::NonPositiveDefiniteResult {
        context: "numerator precision does not exceed denominator precision".into(),
    })?;
    let cov = linalg::symmetrized(chol.inverse());
    let mean = &cov * (&inum * &num.mean - &iden * &den.mean);
    let density = GaussianDensity::from_parts(mean, cov);
    // log scale from the identity evaluated at the result mean
    let x = density.mean.clone();
    let log_scale = num.log_eval(&x)? - den.log_eval(&x)? - density.log_eval(&x)?;
    Ok(ScaledGaussian { log_scale, density })
}

/// Single Gaussian with the mixture's mean and covariance (the covariance
/// includes the spread-of-means term).
pub fn moment_match(m: &GaussianMixture) -> Result<GaussianDensity> {
    let (mean, cov) = mixture_moments(m.weights(), m.components());
    linalg::cholesky(&cov)?;
    Ok(GaussianDensity::from_parts(mean, cov))
}

pub(crate) fn mixture_moments(
    weights: &[f64],
    comps: &[GaussianDensity],
) -> (DVector<f64>, DMatrix<f64>) {
    let n = comps[0].dim();
    let mut mean = DVector::zeros(n);
    for (w, c) in weights.iter().zip(comps) {
        mean.axpy(*w, &c.mean, 1.0);
    }
    let mut cov = DMatrix::zeros(n, n);
    for (w, c) in weights.iter().zip(comps) {
        let d = &c.mean - &mean;
        cov += (&c.cov + &d * d.transpose()) * *w;
    }
    (mean, linalg::symmetrized(cov))
}

/// `d(x)^w = scale · N(x; mean, cov / w)` with
/// `scale = sqrt(|2π cov/w| / |2π cov|^w)`.
pub fn scaled_power(d: &GaussianDensity, w: f64) -> Result<ScaledGaussian> {
    if !(w > 0.0 && w <= 1.0) {
        return Err(Error::InvalidWeight(format!(
            "power exponent must lie in (0, 1], got {w}"
        )));
    }
    if w == 1.0 {
        return Ok(ScaledGaussian {
            log_scale: 0.0,
            density: d.clone(),
        });
    }
    let n = d.dim() as f64;
    let chol = linalg::cholesky(&d.cov)?;
    let log_det_2pi = n * LN_2PI + linalg::log_det(&chol);
    // |2π C/w| = |2π C| · w^(-n)
    let log_scale = 0.5 * ((log_det_2pi - n * w.ln()) - w * log_det_2pi);
    Ok(ScaledGaussian {
        log_scale,
        density: GaussianDensity::from_parts(d.mean.clone(), &d.cov / w),
    })
}

/// Validates a symmetric positive-definite matrix.
pub fn assert_spd(cov: &DMatrix<f64>) -> Result<()> {
    linalg::assert_spd(cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn s(m: f64, v: f64) -> GaussianDensity {
        GaussianDensity::scalar(m, v).unwrap()
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn standard_normal_peak() {
        assert_relative_eq!(
            s(0.0, 1.0).eval(&v(&[0.0])).unwrap(),
            0.39894,
            epsilon = 1e-5
        );
    }

    #[test]
    fn duplicated_component_mixture_matches_component() {
        let g = s(1.0, 2.0);
        let m = GaussianMixture::new(vec![0.5, 0.5], vec![g.clone(), g.clone()]).unwrap();
        for x in [-3.0, 0.0, 1.0, 4.5] {
            assert_relative_eq!(
                m.eval(&v(&[x])).unwrap(),
                g.eval(&v(&[x])).unwrap(),
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn eval_dimension_mismatch() {
        assert!(matches!(
            s(0.0, 1.0).eval(&v(&[0.0, 1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn product_of_identical_standard_normals() {
        let p = gaussian_product(&s(0.0, 1.0), &s(0.0, 1.0)).unwrap();
        assert_relative_eq!(p.density.mean()[0], 0.0);
        assert_relative_eq!(p.density.cov()[(0, 0)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn product_scalar_pair() {
        let p = gaussian_product(&s(50.0, 10.0), &s(-30.0, 20.0)).unwrap();
        assert!((p.density.mean()[0] - 23.33).abs() < 0.01);
        assert!((p.density.cov()[(0, 0)] - 6.67).abs() < 0.01);
        let expected = s(50.0, 30.0).eval(&v(&[-30.0])).unwrap();
        assert_relative_eq!(p.scale(), expected, max_relative = 1e-12);
    }

    #[test]
    fn division_by_flat_denominator() {
        let d = gaussian_division(&s(0.0, 1.0), &s(0.0, 1e6)).unwrap();
        assert_relative_eq!(d.density.cov()[(0, 0)], 1.000001, max_relative = 1e-9);
        assert_relative_eq!(d.density.mean()[0], 0.0);
    }

    #[test]
    fn division_scalar_pair() {
        let num = gaussian_product(&s(50.0, 10.0), &s(-30.0, 20.0))
            .unwrap()
            .density;
        let d = gaussian_division(&num, &s(10.0, 1615.0)).unwrap();
        assert!((d.density.mean()[0] - 23.39).abs() < 0.01);
        assert!((d.density.cov()[(0, 0)] - 6.69).abs() < 0.01);
    }

    #[test]
    fn division_invalid_precision() {
        assert!(matches!(
            gaussian_division(&s(0.0, 2.0), &s(0.0, 1.0)),
            Err(Error::NonPositiveDefiniteResult { .. })
        ));
    }

    #[test]
    fn moment_match_single_component() {
        let g = GaussianDensity::from_slices(&[1.0, 2.0], &[2.0, 0.3, 0.3, 1.0]).unwrap();
        let m = moment_match(&GaussianMixture::single(g.clone())).unwrap();
        assert_relative_eq!(m.mean(), g.mean());
        assert_relative_eq!(m.cov(), g.cov());
    }

    #[test]
    fn moment_match_scalar_pair() {
        let m = GaussianMixture::new(vec![0.5, 0.5], vec![s(50.0, 10.0), s(-30.0, 20.0)]).unwrap();
        let g = moment_match(&m).unwrap();
        assert_relative_eq!(g.mean()[0], 10.0, epsilon = 1e-12);
        assert_relative_eq!(g.cov()[(0, 0)], 1615.0, epsilon = 1e-9);
    }

    #[test]
    fn unit_power_is_identity() {
        let g = GaussianDensity::from_slices(&[1.0, 2.0], &[2.0, 0.3, 0.3, 1.0]).unwrap();
        let p = scaled_power(&g, 1.0).unwrap();
        assert_eq!(p.log_scale, 0.0);
        assert_eq!(p.density, g);
    }

    #[test]
    fn power_out_of_range() {
        assert!(scaled_power(&s(0.0, 1.0), 0.0).is_err());
        assert!(scaled_power(&s(0.0, 1.0), 1.5).is_err());
    }

    #[test]
    fn mixture_rejects_bad_weights() {
        assert!(GaussianMixture::new(vec![-1.0, 2.0], vec![s(0.0, 1.0), s(1.0, 1.0)]).is_err());
        assert!(GaussianMixture::new(vec![], vec![]).is_err());
        assert!(GaussianMixture::new(vec![1.0], vec![s(0.0, 1.0), s(1.0, 1.0)]).is_err());
    }

    #[test]
    fn mixture_weights_normalised() {
        let m = GaussianMixture::new(vec![2.0, 6.0], vec![s(0.0, 1.0), s(1.0, 1.0)]).unwrap();
        assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_relative_eq!(m.weights()[0], 0.25);
    }

    #[test]
    fn json_shapes() {
        let g: Density = serde_json::from_str(r#"{"mean":[1,2],"cov":[[2,0],[0,3]]}"#).unwrap();
        assert!(matches!(g, Density::Gaussian(_)));
        let m: Density = serde_json::from_str(
            r#"{"weights":[0.5,0.5],"components":[{"mean":[0],"cov":[[1]]},{"mean":[1],"cov":[[2]]}]}"#,
        )
        .unwrap();
        assert!(matches!(m, Density::Mixture(_)));
        let bad: std::result::Result<Density, _> =
            serde_json::from_str(r#"{"mean":[1],"cov":[[-1]]}"#);
        assert!(bad.is_err());
        let text = serde_json::to_string(&g).unwrap();
        assert_eq!(text, r#"{"mean":[1.0,2.0],"cov":[[2.0,0.0],[0.0,3.0]]}"#);
    }
}
