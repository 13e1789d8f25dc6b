//! Wall-clock cost of single fusion calls.

use std::fmt::Write as _;
use std::hint::black_box;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::fusion::{
    fuse_gmd, fuse_hmd_mixture, fuse_naive, fuse_naive_mixture, fuse_pcf, hmd_fuse_gaussian,
    FusionWeight,
};
use crate::gaussian::{GaussianDensity, GaussianMixture};
use crate::validate::random_spd;

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub dims: Vec<usize>,
    pub components: Vec<usize>,
    /// State dimension of the mixture cases.
    pub mixture_dim: usize,
    /// Distinct random input pairs per case.
    pub pairs: usize,
    /// Passes over the pairs per case.
    pub reps: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            dims: vec![2, 4, 6, 9],
            components: vec![1, 2, 4, 8],
            mixture_dim: 4,
            pairs: 64,
            reps: 50,
            seed: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    /// `gaussian` or `mixture`.
    pub case: &'static str,
    pub strategy: &'static str,
    pub dim: usize,
    pub components: usize,
    pub calls: usize,
    pub mean_us: f64,
}

fn gaussian_near(dim: usize, spread: f64, rng: &mut impl Rng) -> GaussianDensity {
    let mean = DVector::from_fn(dim, |_, _| rng.random_range(-spread..spread));
    let cov = random_spd(dim, rng) + nalgebra::DMatrix::identity(dim, dim);
    GaussianDensity::new(mean, cov).expect("SPD")
}

fn mixture_near(dim: usize, n: usize, rng: &mut impl Rng) -> GaussianMixture {
    let weights = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let comps = (0..n).map(|_| gaussian_near(dim, 0.5, rng)).collect();
    GaussianMixture::new(weights, comps).expect("positive weights")
}

type Case<'a, T> = (&'static str, &'a dyn Fn(&T) -> bool);

fn time_calls<T>(pairs: &[T], reps: usize, f: impl Fn(&T) -> bool) -> (usize, f64) {
    let mut ok = 0usize;
    let start = Instant::now();
    for _ in 0..reps {
        for p in pairs {
            ok += black_box(f(black_box(p))) as usize;
        }
    }
    let calls = reps * pairs.len();
    let _ = black_box(ok);
    (calls, start.elapsed().as_secs_f64() * 1e6 / calls as f64)
}

/// Times HMD against covariance intersection and naive fusion over `dims`
/// (Gaussian inputs), and mixture HMD against PCF and naive over
/// `components` (equal-size mixtures of dimension `mixture_dim`).
pub fn bench_fusion(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let w = FusionWeight::HALF;
    let mut rows = Vec::new();
    for &dim in &cfg.dims {
        let pairs: Vec<_> = (0..cfg.pairs)
            .map(|_| {
                (
                    gaussian_near(dim, 10.0, &mut rng),
                    gaussian_near(dim, 10.0, &mut rng),
                )
            })
            .collect();
        let cases: [Case<(GaussianDensity, GaussianDensity)>; 3] = [
            ("naive", &|(a, b)| fuse_naive(a, b).is_ok()),
            ("gmd", &|(a, b)| fuse_gmd(a, b, w).is_ok()),
            ("hmd", &|(a, b)| hmd_fuse_gaussian(a, b, w).is_ok()),
        ];
        for (name, f) in cases {
            let (calls, mean_us) = time_calls(&pairs, cfg.reps, f);
            rows.push(BenchRow {
                case: "gaussian",
                strategy: name,
                dim,
                components: 1,
                calls,
                mean_us,
            });
        }
    }
    for &n in &cfg.components {
        let pairs: Vec<_> = (0..cfg.pairs)
            .map(|_| {
                (
                    mixture_near(cfg.mixture_dim, n, &mut rng),
                    mixture_near(cfg.mixture_dim, n, &mut rng),
                )
            })
            .collect();
        let cases: [Case<(GaussianMixture, GaussianMixture)>; 3] = [
            ("naive", &|(a, b)| fuse_naive_mixture(a, b).is_ok()),
            ("pcf", &|(a, b)| fuse_pcf(a, b, w).is_ok()),
            ("hmd", &|(a, b)| fuse_hmd_mixture(a, b, w).is_ok()),
        ];
        for (name, f) in cases {
            let (calls, mean_us) = time_calls(&pairs, cfg.reps, f);
            rows.push(BenchRow {
                case: "mixture",
                strategy: name,
                dim: cfg.mixture_dim,
                components: n,
                calls,
                mean_us,
            });
        }
    }
    Ok(rows)
}

/// Mean call time of `strategy` divided by that of `baseline` for the same
/// case, dimension and component count.
pub fn cost_ratio(
    rows: &[BenchRow],
    case: &str,
    strategy: &str,
    baseline: &str,
    dim: usize,
    components: usize,
) -> Option<f64> {
    let find = |s: &str| {
        rows.iter()
            .find(|r| {
                r.case == case && r.strategy == s && r.dim == dim && r.components == components
            })
            .map(|r| r.mean_us)
    };
    Some(find(strategy)? / find(baseline)?)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("case,strategy,dim,components,calls,mean_us\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.4}",
            r.case, r.strategy, r.dim, r.components, r.calls, r.mean_us
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_row_per_strategy_and_size() {
        let cfg = BenchConfig {
            pairs: 4,
            reps: 2,
            ..Default::default()
        };
        let rows = bench_fusion(&cfg).unwrap();
        assert_eq!(rows.len(), 3 * 4 + 3 * 4);
        assert!(rows.iter().all(|r| r.mean_us > 0.0));
        assert!(cost_ratio(&rows, "gaussian", "hmd", "gmd", 6, 1).is_some());
        let csv = bench_csv(&rows);
        assert_eq!(csv.lines().count(), rows.len() + 1);
    }
}
