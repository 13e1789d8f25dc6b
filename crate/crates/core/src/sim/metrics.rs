use std::fmt::Write as _;

use nalgebra::DVector;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::config::NeesBounds;
use crate::error::Result;
use crate::gaussian::{Density, GaussianDensity};
use crate::linalg;

/// `(x̂ − x)ᵀ Γ⁻¹ (x̂ − x)`.
pub fn nees(estimate: &GaussianDensity, truth: &DVector<f64>) -> Result<f64> {
    let chol = linalg::cholesky(estimate.cov())?;
    Ok(linalg::mahalanobis_sq(&chol, &(estimate.mean() - truth)))
}

/// Bounds on the average of `runs` NEES values of a consistent
/// `dim`-dimensional estimator at 95%. The one-sided variant has lower
/// bound 0.
pub fn nees_bounds(dim: usize, runs: usize, kind: NeesBounds) -> (f64, f64) {
    if runs == 0 {
        return (f64::NAN, f64::NAN);
    }
    let dof = (dim * runs) as f64;
    let chi = ChiSquared::new(dof).expect("positive degrees of freedom");
    let m = runs as f64;
    match kind {
        NeesBounds::TwoSided => (chi.inverse_cdf(0.025) / m, chi.inverse_cdf(0.975) / m),
        NeesBounds::OneSided => (0.0, chi.inverse_cdf(0.95) / m),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeesSeries {
    pub mean: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

/// Average NEES per step over runs. `estimates[run][step]` may be mixtures,
/// which are moment-matched; every estimate is compared on the leading
/// `truth` components.
pub fn compute_nees(
    estimates: &[Vec<Density>],
    truth: &[Vec<DVector<f64>>],
    kind: NeesBounds,
) -> Result<NeesSeries> {
    let runs = estimates.len();
    let steps = estimates.first().map_or(0, |r| r.len());
    let mut mean = vec![0.0; steps];
    let mut dim = 0;
    for (run, truth_run) in estimates.iter().zip(truth) {
        for (k, (est, x)) in run.iter().zip(truth_run).enumerate() {
            dim = x.len();
            let g = est.to_gaussian()?.marginal_head(dim);
            mean[k] += nees(&g, x)? / runs as f64;
        }
    }
    let (lo, hi) = nees_bounds(dim, runs, kind);
    Ok(NeesSeries { mean, lo, hi })
}

/// Fraction of runs whose final position error is at least `tau`.
pub fn track_loss_rate(final_errors: &[f64], tau: f64) -> f64 {
    if final_errors.is_empty() {
        return 0.0;
    }
    final_errors.iter().filter(|e| !(**e < tau)).count() as f64 / final_errors.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepMetrics {
    pub step: usize,
    pub time_s: f64,
    pub rmse_pos_m: f64,
    pub rmse_vel_mps: f64,
    pub nees: f64,
    pub nees_lo: f64,
    pub nees_hi: f64,
    /// Mean NEES of the local tracks (fusion methods only; not in the CSV).
    #[serde(skip)]
    pub local_nees: f64,
    #[serde(skip)]
    pub local_rmse_pos_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    /// Mean of the per-step RMSE over the steady-state window.
    pub steady_rmse_pos_m: f64,
    pub steady_rmse_vel_mps: f64,
    /// Fractions of post-transient steps with average NEES inside / above
    /// the bounds.
    pub nees_inside_fraction: f64,
    pub nees_above_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingStats {
    pub fusion_calls: u64,
    pub mean_fusion_call_us: f64,
    pub wall_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodReport {
    pub method: String,
    pub track_loss: f64,
    /// Runs left out of RMSE and NEES at every step (track loss or a
    /// numerical failure).
    pub excluded_runs: Vec<usize>,
    /// Subset of `excluded_runs` that stopped on a numerical error.
    pub failed_runs: Vec<usize>,
    pub included_runs: usize,
    pub summary: Summary,
    #[serde(skip)]
    pub steps: Vec<StepMetrics>,
    #[serde(skip)]
    pub timing: TimingStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub runs: usize,
    pub seed: u64,
    pub nees_dim: usize,
    pub transient_steps: usize,
    pub steady_state_steps: usize,
    pub methods: Vec<MethodReport>,
}

fn fmt_f(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x}")
    }
}

impl MetricsReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == name)
    }

    /// Long-format CSV, one row per (step, method).
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("step,time_s,strategy,rmse_pos_m,rmse_vel_mps,nees,nees_lo,nees_hi\n");
        let steps = self.methods.first().map_or(0, |m| m.steps.len());
        for k in 0..steps {
            for m in &self.methods {
                let s = &m.steps[k];
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    s.step,
                    fmt_f(s.time_s),
                    m.method,
                    fmt_f(s.rmse_pos_m),
                    fmt_f(s.rmse_vel_mps),
                    fmt_f(s.nees),
                    fmt_f(s.nees_lo),
                    fmt_f(s.nees_hi)
                );
            }
        }
        out
    }

    /// JSON summary. Wall-clock timing is included only on request so that
    /// the default output is reproducible byte for byte.
    pub fn to_json(&self, with_timing: bool) -> String {
        let mut v = serde_json::to_value(self).expect("report serialises");
        let timing: serde_json::Map<String, serde_json::Value> = self
            .methods
            .iter()
            .map(|m| (m.method.clone(), serde_json::to_value(&m.timing).unwrap()))
            .collect();
        let track_loss: serde_json::Map<String, serde_json::Value> = self
            .methods
            .iter()
            .map(|m| (m.method.clone(), m.track_loss.into()))
            .collect();
        v["track_loss"] = track_loss.into();
        if with_timing {
            v["timing"] = timing.into();
        }
        serde_json::to_string_pretty(&v).expect("report serialises") + "\n"
    }
}
