//! Scenario configuration.
//!
//! The on-disk format is TOML (line-oriented `key = value` pairs under
//! `[section]` headers); JSON with the same structure is accepted as well.
//! Angles are given in degrees and converted on use.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::filters::{ImmConfig, MeasurementKind, MeasurementModel, MotionKind, MotionModel};
use crate::fusion::Strategy;

pub const KNOT_MPS: f64 = 0.514444;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub duration_s: f64,
    pub dt_s: f64,
    pub fusion_period_s: f64,
    pub runs: usize,
    pub seed: u64,
    #[serde(default = "default_tau")]
    pub track_loss_threshold_m: f64,
    pub methods: Vec<Method>,
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default)]
    pub feedback: bool,
    /// Fusion centre keeps its own track and fuses its prediction with the
    /// incoming local tracks (Gaussian trackers only).
    #[serde(default)]
    pub fusion_memory: bool,
    /// Fused mixture size after pruning (only used with mixture trackers).
    #[serde(default = "default_prune")]
    pub prune_to: usize,
    #[serde(default)]
    pub nees_bounds: NeesBounds,
    /// Leading steps excluded from steady-state and consistency summaries.
    #[serde(default)]
    pub transient_steps: usize,
    /// Trailing steps averaged for steady-state RMSE.
    #[serde(default = "default_steady")]
    pub steady_state_steps: usize,
    pub truth: TruthConfig,
    pub tracker: TrackerConfig,
    pub sensors: Vec<SensorConfig>,
}

fn default_tau() -> f64 {
    500.0
}

fn default_omega() -> f64 {
    0.5
}

fn default_steady() -> usize {
    20
}

fn default_prune() -> usize {
    2
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeesBounds {
    #[default]
    TwoSided,
    OneSided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TruthConfig {
    /// Noisy NCV rollout in 3D.
    Ncv3d {
        /// `[x, y, z, vx, vy, vz]` at t = 0.
        initial_state: Vec<f64>,
        /// Per-axis process-noise intensity (m²/s³).
        q: Vec<f64>,
    },
    /// Deterministic sine path rotated in the plane.
    Sine2d {
        start: [f64; 2],
        speed_knots: f64,
        amplitude_m: f64,
        wavelength_m: f64,
        /// Direction of the mean track, counter-clockwise from +x.
        rotation_deg: f64,
    },
}

impl TruthConfig {
    pub fn spatial_dims(&self) -> usize {
        match self {
            TruthConfig::Ncv3d { q, .. } => q.len(),
            TruthConfig::Sine2d { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: MotionKind,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrackerConfig {
    Ekf {
        model: ModelConfig,
        /// Initial standard deviations per block: position, velocity[, acceleration].
        p0_sigma: Vec<f64>,
    },
    Imm {
        models: Vec<ModelConfig>,
        transition: Vec<Vec<f64>>,
        initial_probs: Vec<f64>,
        #[serde(default = "default_pad")]
        pad_variance: f64,
        p0_sigma: Vec<f64>,
    },
}

fn default_pad() -> f64 {
    1.0
}

impl TrackerConfig {
    pub fn model_configs(&self) -> Vec<&ModelConfig> {
        match self {
            TrackerConfig::Ekf { model, .. } => vec![model],
            TrackerConfig::Imm { models, .. } => models.iter().collect(),
        }
    }

    pub fn p0_sigma(&self) -> &[f64] {
        match self {
            TrackerConfig::Ekf { p0_sigma, .. } | TrackerConfig::Imm { p0_sigma, .. } => p0_sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub kind: MeasurementKind,
    pub position: Vec<f64>,
    /// Standard deviations: `[m, deg, deg]` for range/az/el, `[deg]` for bearings.
    pub sigma: Vec<f64>,
}

impl SensorConfig {
    pub fn model(&self) -> Result<MeasurementModel> {
        let variances = match self.kind {
            MeasurementKind::RangeAzEl => {
                if self.sigma.len() != 3 {
                    return Err(Error::Config("range_az_el sensors need 3 sigmas".into()));
                }
                vec![
                    self.sigma[0].powi(2),
                    self.sigma[1].to_radians().powi(2),
                    self.sigma[2].to_radians().powi(2),
                ]
            }
            MeasurementKind::BearingNorth => {
                if self.sigma.len() != 1 {
                    return Err(Error::Config("bearing sensors need 1 sigma".into()));
                }
                vec![self.sigma[0].to_radians().powi(2)]
            }
        };
        MeasurementModel::new(self.kind, self.position.clone(), variances)
            .map_err(|e| Error::Config(format!("sensor: {e}")))
    }
}

/// What is evaluated in a scenario: a fusion strategy over the local
/// tracks, or a centralised EKF processing every sensor's measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Fusion(Strategy),
    /// Centralised EKF; `None` uses the first tracker model.
    Centralized(Option<MotionKind>),
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Fusion(s) => s.name().to_string(),
            Method::Centralized(None) => "centralized".into(),
            Method::Centralized(Some(MotionKind::Ncv)) => "centralized-cv".into(),
            Method::Centralized(Some(MotionKind::Nca)) => "centralized-ca".into(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "centralized" => Ok(Method::Centralized(None)),
            "centralized-cv" => Ok(Method::Centralized(Some(MotionKind::Ncv))),
            "centralized-ca" => Ok(Method::Centralized(Some(MotionKind::Nca))),
            other => Ok(Method::Fusion(other.parse()?)),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl ScenarioConfig {
    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn steps(&self) -> usize {
        (self.duration_s / self.dt_s).round() as usize
    }

    /// Fusion cadence in steps.
    pub fn fusion_every(&self) -> usize {
        (self.fusion_period_s / self.dt_s).round() as usize
    }

    pub fn spatial_dims(&self) -> usize {
        self.truth.spatial_dims()
    }

    pub fn motion_model(&self, m: &ModelConfig) -> Result<MotionModel> {
        MotionModel::new(m.kind, self.dt_s, m.q.clone())
    }

    pub fn motion_models(&self) -> Result<Vec<MotionModel>> {
        self.tracker
            .model_configs()
            .into_iter()
            .map(|m| self.motion_model(m))
            .collect()
    }

    pub fn imm_config(&self) -> Result<Option<(ImmConfig, Vec<f64>)>> {
        match &self.tracker {
            TrackerConfig::Ekf { .. } => Ok(None),
            TrackerConfig::Imm {
                transition,
                initial_probs,
                pad_variance,
                ..
            } => {
                let m = transition.len();
                if transition.iter().any(|r| r.len() != m) {
                    return Err(Error::Config("transition matrix must be square".into()));
                }
                let flat: Vec<f64> = transition.iter().flatten().copied().collect();
                let cfg = ImmConfig::new(
                    self.motion_models()?,
                    DMatrix::from_row_slice(m, m, &flat),
                    *pad_variance,
                )?;
                Ok(Some((cfg, initial_probs.clone())))
            }
        }
    }

    /// Motion model used by a centralised method.
    pub fn centralized_model(&self, kind: Option<MotionKind>) -> Result<MotionModel> {
        let models = self.tracker.model_configs();
        let m = match kind {
            None => models[0],
            Some(k) => models.into_iter().find(|m| m.kind == k).ok_or_else(|| {
                Error::Config(format!("no {k:?} model in tracker for centralized method"))
            })?,
        };
        self.motion_model(m)
    }

    pub fn sensor_models(&self) -> Result<Vec<MeasurementModel>> {
        self.sensors.iter().map(|s| s.model()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if !(self.dt_s > 0.0) || !(self.duration_s >= self.dt_s) {
            return bad("need dt_s > 0 and duration_s >= dt_s");
        }
        if !(self.fusion_period_s >= self.dt_s) {
            return bad("fusion_period_s must be at least dt_s");
        }
        let ratio = self.fusion_period_s / self.dt_s;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return bad("fusion_period_s must be a multiple of dt_s");
        }
        if self.runs == 0 {
            return bad("runs must be >= 1");
        }
        if !(self.track_loss_threshold_m > 0.0) {
            return bad("track_loss_threshold_m must be positive");
        }
        if !(0.0..=1.0).contains(&self.omega) {
            return bad("omega must lie in [0, 1]");
        }
        if self.methods.is_empty() {
            return bad("at least one method is required");
        }
        if self.sensors.is_empty() {
            return bad("at least one sensor is required");
        }
        if self.prune_to == 0 {
            return bad("prune_to must be >= 1");
        }
        if self.transient_steps >= self.steps() {
            return bad("transient_steps must be shorter than the run");
        }
        if self.steady_state_steps == 0 || self.steady_state_steps > self.steps() {
            return bad("steady_state_steps must lie in 1..=steps");
        }
        let d = self.spatial_dims();
        if let TruthConfig::Ncv3d { initial_state, q } = &self.truth {
            if initial_state.len() != 2 * q.len() {
                return bad("ncv3d initial_state must hold positions and velocities");
            }
        }
        let models = self
            .motion_models()
            .map_err(|e| Error::Config(e.to_string()))?;
        for m in &models {
            if m.spatial_dims() != d {
                return bad("tracker model q must have one entry per truth axis");
            }
        }
        let max_order = models.iter().map(|m| m.order()).max().unwrap_or(2);
        if self.tracker.p0_sigma().len() < max_order {
            return bad("p0_sigma needs one entry per state block");
        }
        if self
            .tracker
            .p0_sigma()
            .iter()
            .any(|s| !(s * s > 0.0 && (s * s).is_finite()))
        {
            return bad("p0_sigma entries must be positive and finite");
        }
        for s in self.sensor_models()? {
            if s.position_dim() != d {
                return bad("sensor position dimension must match the truth");
            }
        }
        if let Some((imm, probs)) = self.imm_config()? {
            if probs.len() != imm.mode_count() {
                return bad("initial_probs must have one entry per mode");
            }
            if self.feedback && self.prune_to < imm.mode_count() {
                return bad("feedback needs prune_to >= number of modes");
            }
        }
        if self.fusion_memory && matches!(self.tracker, TrackerConfig::Imm { .. }) {
            return bad("fusion_memory is only supported with ekf trackers");
        }
        for m in &self.methods {
            if let Method::Centralized(k) = m {
                self.centralized_model(*k)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for s in [
            "centralized",
            "centralized-cv",
            "centralized-ca",
            "hmd",
            "amd",
            "pcf",
        ] {
            assert_eq!(s.parse::<Method>().unwrap().name(), s);
        }
        assert!("nope".parse::<Method>().is_err());
    }

    #[test]
    fn knots() {
        assert!((16.0 * KNOT_MPS - 8.2311).abs() < 1e-4);
    }
}
