//! Property suite for the harmonic pool, run by `trackfuse validate`.
//!
//! Every check draws its cases from a seeded generator, so a given
//! `(seed, trials)` pair always exercises the same inputs.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::Result;
use crate::fusion::{
    fuse_hmd, fuse_naive, hmd_fuse_gaussian, hmd_norm_const, hmd_unnormalized_log,
    hmd_weighted_unnormalized, FusionWeight,
};
use crate::gaussian::{Density, GaussianDensity};
use crate::linalg;
use crate::quadrature::{self, Interval};

/// Closed-form Gaussian pool under test.
pub type GaussianPool =
    fn(&GaussianDensity, &GaussianDensity, FusionWeight) -> Result<GaussianDensity>;

#[derive(Debug, Clone, Copy)]
pub struct ValidateOptions {
    pub seed: u64,
    /// Overrides the default case count of every check.
    pub trials: Option<usize>,
    /// Test hook: replaces the Gaussian division by a plain product.
    pub broken_division: bool,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            seed: 2024,
            trials: None,
            broken_division: false,
        }
    }
}

impl ValidateOptions {
    fn pool(&self) -> GaussianPool {
        if self.broken_division {
            |a, b, _| fuse_naive(a, b)
        } else {
            hmd_fuse_gaussian
        }
    }

    fn count(&self, default: usize) -> usize {
        self.trials.unwrap_or(default).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyOutcome {
    pub name: &'static str,
    pub cases: usize,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub detail: String,
}

impl fmt::Display for PropertyOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<22} {:>6} cases  {}  {}",
            self.name,
            self.cases,
            if self.passed { "PASS" } else { "FAIL" },
            self.detail
        )
    }
}

fn outcome(name: &'static str, cases: usize, passed: bool, detail: String) -> PropertyOutcome {
    PropertyOutcome {
        name,
        cases,
        passed,
        detail,
    }
}

fn failed(name: &'static str, cases: usize, e: crate::error::Error) -> PropertyOutcome {
    outcome(name, cases, false, format!("error: {e}"))
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Random 1D Gaussian with mean in [-10, 10] and variance in [0.5, 20].
pub fn random_scalar(rng: &mut impl Rng) -> GaussianDensity {
    GaussianDensity::scalar(rng.random_range(-10.0..10.0), rng.random_range(0.5..20.0))
        .expect("positive variance")
}

/// Random SPD matrix `A Aᵀ + εI` with standard normal `A` and
/// `ε ∈ [1e-3, 1]`, scaled by a random factor in [0.1, 10].
pub fn random_spd(dim: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let eps = 10f64.powf(rng.random_range(-3.0..0.0));
    let scale = 10f64.powf(rng.random_range(-1.0..1.0));
    linalg::symmetrized((&a * a.transpose() + DMatrix::identity(dim, dim) * eps) * scale)
}

pub fn random_gaussian(dim: usize, rng: &mut impl Rng) -> GaussianDensity {
    let mean = DVector::from_fn(dim, |_, _| 10.0 * rng.sample::<f64, _>(StandardNormal));
    GaussianDensity::new(mean, random_spd(dim, rng)).expect("random SPD")
}

fn scalar_log(g: &GaussianDensity, x: f64) -> f64 {
    g.log_eval(&DVector::from_element(1, x))
        .expect("1D density")
}

fn span(a: &GaussianDensity, b: &GaussianDensity, sigmas: f64) -> Interval {
    let (da, db): (Density, Density) = (a.clone().into(), b.clone().into());
    quadrature::bounding_box(&[&da, &db], sigmas)[0]
}

/// Normalising constant over a 21-point weight grid: bounded by one, equal
/// to one at both endpoints, convex in the weight.
pub fn check_convexity(pairs: usize, seed: u64) -> PropertyOutcome {
    const NAME: &str = "norm-const convexity";
    let mut rng = rng_for(seed, 1);
    let mut worst_max = f64::NEG_INFINITY;
    let mut worst_end = 0.0f64;
    let mut worst_second = f64::INFINITY;
    for _ in 0..pairs {
        let a: Density = random_scalar(&mut rng).into();
        let b: Density = random_scalar(&mut rng).into();
        let mut zeta = Vec::with_capacity(21);
        for i in 0..=20 {
            let w = FusionWeight::new(i as f64 / 20.0).unwrap();
            match hmd_norm_const(&a, &b, w) {
                Ok(z) => zeta.push(z),
                Err(e) => return failed(NAME, pairs, e),
            }
        }
        worst_max = worst_max.max(zeta.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        worst_end = worst_end
            .max((zeta[0] - 1.0).abs())
            .max((zeta[20] - 1.0).abs());
        for k in 1..20 {
            worst_second = worst_second.min(zeta[k - 1] - 2.0 * zeta[k] + zeta[k + 1]);
        }
    }
    let passed = worst_max <= 1.0 + 1e-6 && worst_end <= 1e-6 && worst_second >= -1e-8;
    outcome(
        NAME,
        pairs,
        passed,
        format!("max ζ {worst_max:.9}, endpoint error {worst_end:.2e}, min second difference {worst_second:.2e}"),
    )
}

/// Three-density weighted harmonic mean equals the two-step nested pool on
/// a 201-point grid.
pub fn check_recursion(triples: usize, seed: u64) -> PropertyOutcome {
    const NAME: &str = "recursion identity";
    let mut rng = rng_for(seed, 2);
    let mut worst = 0.0f64;
    for _ in 0..triples {
        let g: Vec<GaussianDensity> = (0..3).map(|_| random_scalar(&mut rng)).collect();
        let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let lo = g
            .iter()
            .map(|d| d.mean()[0] - 5.0 * d.cov()[(0, 0)].sqrt())
            .fold(f64::INFINITY, f64::min);
        let hi = g
            .iter()
            .map(|d| d.mean()[0] + 5.0 * d.cov()[(0, 0)].sqrt())
            .fold(f64::NEG_INFINITY, f64::max);
        for x in Interval::new(lo, hi).grid(201) {
            let logs: Vec<f64> = g.iter().map(|d| scalar_log(d, x)).collect();
            let vals: Vec<f64> = logs.iter().map(|l| l.exp()).collect();
            let direct = hmd_weighted_unnormalized(&vals, &w);
            let s2 = w[0] + w[1];
            let first = hmd_unnormalized_log(logs[0], logs[1], w[1] / s2);
            let nested = hmd_unnormalized_log(first, logs[2], w[2]).exp();
            worst = worst.max((direct - nested).abs());
        }
    }
    outcome(NAME, triples, worst <= 1e-9, format!("max |Δ| {worst:.2e}"))
}

/// Normalised exact pool never falls below the smaller input density.
pub fn check_lower_bound(pairs: usize, seed: u64) -> PropertyOutcome {
    const NAME: &str = "lower bound";
    let mut rng = rng_for(seed, 3);
    let mut worst = f64::INFINITY;
    for _ in 0..pairs {
        let (a, b) = (random_scalar(&mut rng), random_scalar(&mut rng));
        let w = FusionWeight::new(rng.random_range(0.05..0.95)).unwrap();
        let zeta = match hmd_norm_const(&a.clone().into(), &b.clone().into(), w) {
            Ok(z) => z,
            Err(e) => return failed(NAME, pairs, e),
        };
        for x in span(&a, &b, 6.0).grid(401) {
            let (la, lb) = (scalar_log(&a, x), scalar_log(&b, x));
            let m = hmd_unnormalized_log(la, lb, w.value()).exp() / zeta;
            worst = worst.min(m - la.exp().min(lb.exp()));
        }
    }
    outcome(
        NAME,
        pairs,
        worst >= -1e-9,
        format!("min M − min(pa, pb) {worst:.2e}"),
    )
}

fn kl_to_pool(
    p: &GaussianDensity,
    a: &GaussianDensity,
    b: &GaussianDensity,
    w: f64,
    log_zeta: f64,
) -> Result<f64> {
    let iv = span(a, b, 12.0);
    // Integrates p·(1 + log p/M) so that the stopping rule stays relative
    // when the divergence itself is close to zero.
    let shifted = quadrature::integrate_1d(
        |x| {
            let lp = scalar_log(p, x);
            let lm = hmd_unnormalized_log(scalar_log(a, x), scalar_log(b, x), w) - log_zeta;
            lp.exp() * (1.0 + lp - lm)
        },
        iv,
        1e-12,
    )?;
    let mass = quadrature::integrate_1d(|x| scalar_log(p, x).exp(), iv, 1e-12)?;
    Ok(shifted - mass)
}

fn kl_gaussian_1d(p: &GaussianDensity, q: &GaussianDensity) -> f64 {
    let (mp, vp) = (p.mean()[0], p.cov()[(0, 0)]);
    let (mq, vq) = (q.mean()[0], q.cov()[(0, 0)]);
    0.5 * ((vq / vp).ln() + (vp + (mp - mq).powi(2)) / vq - 1.0)
}

/// `KL(pᵢ‖M) ≤ KL(pᵢ‖pⱼ)` for both inputs.
pub fn check_kl(pairs: usize, seed: u64) -> PropertyOutcome {
    const NAME: &str = "KL placement";
    let mut rng = rng_for(seed, 4);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..pairs {
        let (a, b) = (random_scalar(&mut rng), random_scalar(&mut rng));
        let w = FusionWeight::new(rng.random_range(0.05..0.95)).unwrap();
        let res = hmd_norm_const(&a.clone().into(), &b.clone().into(), w).and_then(|zeta| {
            let lz = zeta.ln();
            let ka = kl_to_pool(&a, &a, &b, w.value(), lz)? - kl_gaussian_1d(&a, &b);
            let kb = kl_to_pool(&b, &a, &b, w.value(), lz)? - kl_gaussian_1d(&b, &a);
            Ok(ka.max(kb))
        });
        match res {
            Ok(d) => worst = worst.max(d),
            Err(e) => return failed(NAME, pairs, e),
        }
    }
    outcome(
        NAME,
        pairs,
        worst <= 1e-6,
        format!("max KL(p‖M) − KL(p‖q) {worst:.2e}"),
    )
}

/// Raising one input value never lowers the unnormalised pool.
pub fn check_monotonicity(cases: usize, seed: u64) -> PropertyOutcome {
    const NAME: &str = "monotonicity";
    let mut rng = rng_for(seed, 5);
    let mut worst = f64::INFINITY;
    for _ in 0..cases {
        let w: f64 = rng.random_range(0.0..1.0);
        let lb: f64 = rng.random_range(-20.0..2.0);
        let la: f64 = rng.random_range(-20.0..2.0);
        let step: f64 = rng.random_range(0.0..5.0);
        let lo = hmd_unnormalized_log(la, lb, w);
        let hi = hmd_unnormalized_log(la + step, lb, w);
        worst = worst.min(hi - lo);
    }
    outcome(
        NAME,
        cases,
        worst >= -1e-12,
        format!("min log-increase {worst:.2e}"),
    )
}

/// Random SPD pairs of dimension 2 to 6: the moment-matched denominator
/// dominates the product covariance, so the division is valid.
pub fn check_pd_fuzz(pairs: usize, seed: u64) -> PropertyOutcome {
    const NAME: &str = "division validity";
    let mut rng = rng_for(seed, 6);
    let mut worst = f64::INFINITY;
    for _ in 0..pairs {
        let dim = rng.random_range(2..=6);
        let (a, b) = (
            random_gaussian(dim, &mut rng),
            random_gaussian(dim, &mut rng),
        );
        let w = FusionWeight::new(rng.random_range(0.0..1.0)).unwrap();
        match fuse_hmd(&a, &b, w) {
            Ok(r) => worst = worst.min(r.diagnostics.pd_margin.unwrap_or(f64::NAN)),
            Err(e) => return failed(NAME, pairs, e),
        }
    }
    outcome(
        NAME,
        pairs,
        worst > 0.0,
        format!("min eig(Γ_eq − Γ_num) {worst:.2e}"),
    )
}

/// Pooling a density with itself returns it.
pub fn check_self_fusion(cases: usize, seed: u64, pool: GaussianPool) -> PropertyOutcome {
    const NAME: &str = "self fusion";
    let mut rng = rng_for(seed, 7);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let dim = rng.random_range(1..=6);
        let g = random_gaussian(dim, &mut rng);
        let w = FusionWeight::new(rng.random_range(0.0..1.0)).unwrap();
        match pool(&g, &g, w) {
            Ok(f) => {
                let scale = g.cov().amax().max(1.0);
                worst = worst
                    .max((f.mean() - g.mean()).amax() / g.mean().amax().max(1.0))
                    .max((f.cov() - g.cov()).amax() / scale);
            }
            Err(e) => return failed(NAME, cases, e),
        }
    }
    outcome(
        NAME,
        cases,
        worst <= 1e-9,
        format!("max relative deviation {worst:.2e}"),
    )
}

/// Equal means: the pool reduces to inverse covariance intersection,
/// `Γ⁻¹ = Γa⁻¹ + Γb⁻¹ − (ωΓa + (1−ω)Γb)⁻¹`.
pub fn check_ici(cases: usize, seed: u64, pool: GaussianPool) -> PropertyOutcome {
    const NAME: &str = "equal-means ICI";
    let mut rng = rng_for(seed, 8);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let dim = rng.random_range(1..=6);
        let mean = DVector::from_fn(dim, |_, _| rng.random_range(-5.0..5.0));
        let ca = random_spd(dim, &mut rng);
        let cb = random_spd(dim, &mut rng);
        let w: f64 = rng.random_range(0.0..1.0);
        let a = GaussianDensity::new(mean.clone(), ca.clone()).unwrap();
        let b = GaussianDensity::new(mean.clone(), cb.clone()).unwrap();
        let expected = (|| -> Result<DMatrix<f64>> {
            let eq = &ca * w + &cb * (1.0 - w);
            let info =
                linalg::spd_inverse(&ca)? + linalg::spd_inverse(&cb)? - linalg::spd_inverse(&eq)?;
            linalg::spd_inverse(&linalg::symmetrized(info))
        })();
        match (pool(&a, &b, FusionWeight::new(w).unwrap()), expected) {
            (Ok(f), Ok(e)) => {
                worst = worst
                    .max((f.cov() - &e).amax() / e.amax())
                    .max((f.mean() - &mean).amax() / mean.amax().max(1.0));
            }
            (Err(e), _) | (_, Err(e)) => return failed(NAME, cases, e),
        }
    }
    outcome(
        NAME,
        cases,
        worst <= 1e-6,
        format!("max relative deviation {worst:.2e}"),
    )
}

/// Runs every property with its default case count (or `opts.trials`).
pub fn run_suite(opts: &ValidateOptions) -> Vec<PropertyOutcome> {
    let s = opts.seed;
    vec![
        check_convexity(opts.count(5), s),
        check_recursion(opts.count(5), s),
        check_lower_bound(opts.count(10), s),
        check_kl(opts.count(10), s),
        check_monotonicity(opts.count(10_000), s),
        check_pd_fuzz(opts.count(1000), s),
        check_self_fusion(opts.count(200), s, opts.pool()),
        check_ici(opts.count(200), s, opts.pool()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_closed_form_matches_known_value() {
        let p = GaussianDensity::scalar(0.0, 1.0).unwrap();
        let q = GaussianDensity::scalar(1.0, 2.0).unwrap();
        // 0.5 (ln 2 + 2/2 − 1)
        assert!((kl_gaussian_1d(&p, &q) - 0.5 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn kl_to_pool_of_identical_inputs_is_zero() {
        let p = GaussianDensity::scalar(3.0, 4.0).unwrap();
        assert!(kl_to_pool(&p, &p, &p, 0.3, 0.0).unwrap().abs() < 1e-9);
    }

    #[test]
    fn broken_division_is_caught() {
        let opts = ValidateOptions {
            trials: Some(5),
            broken_division: true,
            ..Default::default()
        };
        let r = run_suite(&opts);
        assert!(r.iter().any(|o| !o.passed));
    }
}
