//! Track-to-track fusion strategies.
//!
//! Two-input strategies follow the pooling convention
//! `M(a, b) = mean_ω{a(x), b(x)} / ζ`. For the harmonic pool the weight `ω`
//! is the weight of `a` in the arithmetic-mean denominator:
//! `HMD(a, b; ω) ∝ a·b / (ω·a + (1−ω)·b)`, so `ω = 1` returns `b` and
//! `ω = 0` returns `a`.

mod conservative;
mod gate;
mod hmd;
mod ml;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{Density, GaussianMixture};

pub use conservative::{
    fuse_amd, fuse_gmd, fuse_gmd_many, fuse_naive, fuse_naive_many, fuse_naive_mixture, fuse_pcf,
};
pub use gate::{association_gate, default_gate_threshold};
pub use hmd::{
    fuse_hmd, fuse_hmd_mixture, fuse_hmd_mixture_partial, fuse_hmd_recursive, hmd_fuse_gaussian,
    hmd_norm_const, hmd_unnormalized, hmd_unnormalized_log, hmd_weighted_unnormalized,
};
pub use ml::fuse_ml_correlated;

/// Scalar pooling weight in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct FusionWeight(f64);

impl FusionWeight {
    pub const HALF: FusionWeight = FusionWeight(0.5);

    pub fn new(w: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::InvalidWeight(format!(
                "fusion weight must lie in [0, 1], got {w}"
            )));
        }
        Ok(Self(w))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn complement(self) -> f64 {
        1.0 - self.0
    }
}

impl Default for FusionWeight {
    fn default() -> Self {
        Self::HALF
    }
}

impl TryFrom<f64> for FusionWeight {
    type Error = Error;

    fn try_from(w: f64) -> Result<Self> {
        Self::new(w)
    }
}

impl From<FusionWeight> for f64 {
    fn from(w: FusionWeight) -> f64 {
        w.0
    }
}

/// Per-input weights on the probability simplex (sum to one within 1e-12).
pub fn check_simplex(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::InvalidWeight("no weights given".into()));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidWeight("weights must be nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidWeight(format!(
            "weights must sum to 1, got {total}"
        )));
    }
    Ok(())
}

/// Equal weights `1/n`.
pub fn uniform_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Naive,
    Gmd,
    Amd,
    Pcf,
    Hmd,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Naive,
        Strategy::Gmd,
        Strategy::Amd,
        Strategy::Pcf,
        Strategy::Hmd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Naive => "naive",
            Strategy::Gmd => "gmd",
            Strategy::Amd => "amd",
            Strategy::Pcf => "pcf",
            Strategy::Hmd => "hmd",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown strategy '{s}'")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Normalising constant of the pooled density, when computed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm_const: Option<f64>,
    /// Minimum eigenvalue of `Γ_eq − Γ_num` (positive when the Gaussian
    /// division is valid).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pd_margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusionResult {
    pub density: Density,
    pub strategy: Strategy,
    pub diagnostics: Diagnostics,
}

/// Two-input fusion of arbitrary densities with the named strategy.
/// Gaussian inputs use the closed forms; a mixture on either side switches
/// to the mixture variant of the strategy.
pub fn fuse_pair(
    strategy: Strategy,
    a: &Density,
    b: &Density,
    w: FusionWeight,
) -> Result<FusionResult> {
    let both_gaussian = matches!((a, b), (Density::Gaussian(_), Density::Gaussian(_)));
    let plain = |density: Density| FusionResult {
        density,
        strategy,
        diagnostics: Diagnostics::default(),
    };
    match (strategy, a, b) {
        (Strategy::Hmd, Density::Gaussian(ga), Density::Gaussian(gb)) => fuse_hmd(ga, gb, w),
        (Strategy::Hmd, _, _) => Ok(plain(
            fuse_hmd_mixture(&a.to_mixture(), &b.to_mixture(), w)?.into(),
        )),
        (Strategy::Naive, Density::Gaussian(ga), Density::Gaussian(gb)) => {
            Ok(plain(fuse_naive(ga, gb)?.into()))
        }
        (Strategy::Naive, _, _) => Ok(plain(
            fuse_naive_mixture(&a.to_mixture(), &b.to_mixture())?.into(),
        )),
        (Strategy::Gmd, Density::Gaussian(ga), Density::Gaussian(gb)) => {
            Ok(plain(fuse_gmd(ga, gb, w)?.into()))
        }
        (Strategy::Gmd | Strategy::Pcf, _, _) => {
            let fused: GaussianMixture = fuse_pcf(&a.to_mixture(), &b.to_mixture(), w)?;
            if both_gaussian {
                Ok(plain(fused.components()[0].clone().into()))
            } else {
                Ok(plain(fused.into()))
            }
        }
        (Strategy::Amd, _, _) => Ok(plain(
            fuse_amd(&[a.clone(), b.clone()], &[w.value(), w.complement()])?.into(),
        )),
    }
}
