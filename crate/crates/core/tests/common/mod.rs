#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use trackfuse::GaussianDensity;

/// `A Aᵀ + floor·I` from `dim²` entries in [-3, 3].
pub fn spd(dim: usize, floor: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-3.0..3.0f64, dim * dim).prop_map(move |v| {
        let a = DMatrix::from_vec(dim, dim, v);
        let m = &a * a.transpose() + DMatrix::identity(dim, dim) * floor;
        (&m + m.transpose()) * 0.5
    })
}

pub fn gaussian(dim: usize) -> impl Strategy<Value = GaussianDensity> {
    (prop::collection::vec(-20.0..20.0f64, dim), spd(dim, 0.5))
        .prop_map(|(m, c)| GaussianDensity::new(DVector::from_vec(m), c).unwrap())
}

pub fn gaussian_pair(max_dim: usize) -> impl Strategy<Value = (GaussianDensity, GaussianDensity)> {
    (1..=max_dim).prop_flat_map(|d| (gaussian(d), gaussian(d)))
}

pub fn s(mean: f64, var: f64) -> GaussianDensity {
    GaussianDensity::scalar(mean, var).unwrap()
}

pub fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Largest entry-wise difference relative to the largest entry of `b`.
pub fn mat_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1e-300)
}

/// Observes the first state component directly.
pub struct FirstComponent(pub f64);

impl trackfuse::filters::Measurement for FirstComponent {
    fn meas_dim(&self) -> usize {
        1
    }
    fn predict(&self, state: &DVector<f64>) -> trackfuse::Result<DVector<f64>> {
        Ok(DVector::from_element(1, state[0]))
    }
    fn jacobian(&self, _: &DVector<f64>, state_dim: usize) -> trackfuse::Result<DMatrix<f64>> {
        let mut h = DMatrix::zeros(1, state_dim);
        h[(0, 0)] = 1.0;
        Ok(h)
    }
    fn noise(&self) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.0)
    }
    fn angle_mask(&self) -> Vec<bool> {
        vec![false]
    }
}

/// Plain Kalman step for a first-component measurement. Returns the
/// updated moments and the innovation log-likelihood.
pub fn kf_step(
    x: &DVector<f64>,
    p: &DMatrix<f64>,
    model: &trackfuse::filters::MotionModel,
    r: f64,
    z: f64,
) -> (DVector<f64>, DMatrix<f64>, f64) {
    let (f, q) = model.matrices();
    let xp = &f * x;
    let pp = &f * p * f.transpose() + q;
    let s = pp[(0, 0)] + r;
    let k = pp.column(0) / s;
    let nu = z - xp[0];
    let x = xp + &k * nu;
    let p = &pp - &k * pp.row(0);
    let log_lik = -0.5 * ((2.0 * std::f64::consts::PI * s).ln() + nu * nu / s);
    (x, p, log_lik)
}

/// Per-step output of the exhaustive switching filter: for every mode, the
/// posterior probability of being in it and the moments of the state
/// conditioned on it.
pub struct ModeMoments {
    pub probs: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
}

/// Exact Bayes filter for a linear jump-Markov system with equal-dimension
/// modes: one Kalman filter per mode history, `M^k` hypotheses after `k`
/// steps.
pub fn exhaustive_gaussian_sum(
    models: &[trackfuse::filters::MotionModel],
    transition: &DMatrix<f64>,
    init_probs: &[f64],
    init: &GaussianDensity,
    r: f64,
    zs: &[f64],
) -> Vec<ModeMoments> {
    let m = models.len();
    // (log weight, last mode, mean, cov)
    let mut hyps: Vec<(f64, usize, DVector<f64>, DMatrix<f64>)> = (0..m)
        .map(|i| {
            (
                init_probs[i].ln(),
                i,
                init.mean().clone(),
                init.cov().clone(),
            )
        })
        .collect();
    let mut out = Vec::new();
    for &z in zs {
        let mut next = Vec::new();
        for (lw, i, x, p) in &hyps {
            for j in 0..m {
                let t = transition[(*i, j)];
                if t == 0.0 || !lw.is_finite() {
                    continue;
                }
                let (xn, pn, ll) = kf_step(x, p, &models[j], r, z);
                next.push((lw + t.ln() + ll, j, xn, pn));
            }
        }
        let top = next.iter().map(|h| h.0).fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = next.iter().map(|h| (h.0 - top).exp()).sum();
        for h in &mut next {
            h.0 = h.0 - top - total.ln();
        }
        let n = init.dim();
        let mut probs = vec![0.0; m];
        let mut means = vec![DVector::zeros(n); m];
        let mut covs = vec![DMatrix::zeros(n, n); m];
        for (lw, j, x, _) in &next {
            probs[*j] += lw.exp();
            means[*j] += x * lw.exp();
        }
        for j in 0..m {
            if probs[j] > 0.0 {
                means[j] /= probs[j];
            }
        }
        for (lw, j, x, p) in &next {
            let d = x - &means[*j];
            covs[*j] += (p + &d * d.transpose()) * (lw.exp() / probs[*j]);
        }
        out.push(ModeMoments { probs, means, covs });
        hyps = next;
    }
    out
}
