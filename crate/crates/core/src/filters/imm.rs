//! Interacting multiple model filter whose modes may have different state
//! dimensions.
//!
//! Mode states share a common prefix layout (`[p; v]` for NCV is a prefix of
//! `[p; v; a]` for NCA). Wherever moments are formed across modes, shorter
//! states are zero-padded to the full dimension with `pad_variance` on the
//! padded diagonal, and mode-specific quantities are recovered as the leading
//! marginal.

use nalgebra::{DMatrix, DVector};

use super::ekf::{ekf_predict, ekf_update_with_likelihood};
use super::measurement::Measurement;
use super::motion::MotionModel;
use crate::error::{Error, Result};
use crate::gaussian::{check_dim, log_sum_exp, mixture_moments, GaussianDensity, GaussianMixture};

#[derive(Debug, Clone, PartialEq)]
pub struct ImmConfig {
    pub models: Vec<MotionModel>,
    /// Row-stochastic mode transition matrix.
    pub transition: DMatrix<f64>,
    pub pad_variance: f64,
}

impl ImmConfig {
    pub fn new(
        models: Vec<MotionModel>,
        transition: DMatrix<f64>,
        pad_variance: f64,
    ) -> Result<Self> {
        let m = models.len();
        if m == 0 {
            return Err(Error::Config("IMM needs at least one mode".into()));
        }
        if transition.nrows() != m || transition.ncols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: transition.nrows(),
            });
        }
        for row in transition.row_iter() {
            if row.iter().any(|p| !(*p >= 0.0)) || (row.sum() - 1.0).abs() > 1e-9 {
                return Err(Error::Config(
                    "transition rows must be probability vectors".into(),
                ));
            }
        }
        if !(pad_variance > 0.0) {
            return Err(Error::Config("pad variance must be positive".into()));
        }
        Ok(Self {
            models,
            transition,
            pad_variance,
        })
    }

    pub fn mode_count(&self) -> usize {
        self.models.len()
    }

    pub fn full_dim(&self) -> usize {
        self.models.iter().map(|m| m.state_dim()).max().unwrap_or(0)
    }

    /// Embeds a mode density into the full state dimension.
    pub fn pad(&self, g: &GaussianDensity) -> GaussianDensity {
        pad_density(g, self.full_dim(), self.pad_variance)
    }
}

pub fn pad_density(g: &GaussianDensity, full: usize, pad_variance: f64) -> GaussianDensity {
    let n = g.dim();
    if n == full {
        return g.clone();
    }
    let mut mean = DVector::zeros(full);
    mean.rows_mut(0, n).copy_from(g.mean());
    let mut cov = DMatrix::zeros(full, full);
    cov.view_mut((0, 0), (n, n)).copy_from(g.cov());
    for i in n..full {
        cov[(i, i)] = pad_variance;
    }
    GaussianDensity::from_parts(mean, cov)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImmState {
    /// One density per mode, each in its own model's dimension.
    pub modes: Vec<GaussianDensity>,
    pub probs: Vec<f64>,
}

impl ImmState {
    pub fn new(modes: Vec<GaussianDensity>, probs: Vec<f64>, cfg: &ImmConfig) -> Result<Self> {
        check_dim(cfg.mode_count(), modes.len())?;
        check_dim(cfg.mode_count(), probs.len())?;
        for (g, m) in modes.iter().zip(&cfg.models) {
            check_dim(m.state_dim(), g.dim())?;
        }
        if probs.iter().any(|p| !(*p >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidWeight(
                "mode probabilities must form a simplex".into(),
            ));
        }
        Ok(Self { modes, probs })
    }

    /// Initialises every mode from one full-dimension density.
    pub fn from_full(init: &GaussianDensity, probs: Vec<f64>, cfg: &ImmConfig) -> Result<Self> {
        check_dim(cfg.full_dim(), init.dim())?;
        let modes = cfg
            .models
            .iter()
            .map(|m| init.marginal_head(m.state_dim()))
            .collect();
        Self::new(modes, probs, cfg)
    }

    /// Output mixture in the full dimension, component `m` = mode `m`.
    pub fn mixture(&self, cfg: &ImmConfig) -> GaussianMixture {
        let comps = self.modes.iter().map(|g| cfg.pad(g)).collect();
        GaussianMixture::new(self.probs.clone(), comps).expect("IMM state is a valid mixture")
    }

    /// One IMM cycle: mixing, per-mode EKF predict/update, mode probability
    /// update. If every mode likelihood is degenerate the mode densities are
    /// still updated, the probabilities are reset to uniform and
    /// `ModeLikelihoodDegenerate` is returned.
    pub fn step(
        &mut self,
        cfg: &ImmConfig,
        meas: &impl Measurement,
        z: &DVector<f64>,
    ) -> Result<()> {
        let m = cfg.mode_count();
        let padded: Vec<GaussianDensity> = self.modes.iter().map(|g| cfg.pad(g)).collect();

        let predicted_probs: Vec<f64> = (0..m)
            .map(|j| (0..m).map(|i| cfg.transition[(i, j)] * self.probs[i]).sum())
            .collect();

        let mut new_modes = Vec::with_capacity(m);
        let mut log_post = Vec::with_capacity(m);
        for (j, model) in cfg.models.iter().enumerate() {
            let cj = predicted_probs[j];
            let mixing: Vec<f64> = if cj > 0.0 {
                (0..m)
                    .map(|i| cfg.transition[(i, j)] * self.probs[i] / cj)
                    .collect()
            } else {
                self.probs.clone()
            };
            let (mean, cov) = mixture_moments(&mixing, &padded);
            let mixed = GaussianDensity::from_parts(mean, cov).marginal_head(model.state_dim());
            let predicted = ekf_predict(&mixed, model)?;
            let (updated, log_lik) = ekf_update_with_likelihood(&predicted, meas, z)?;
            new_modes.push(updated);
            log_post.push(if cj > 0.0 {
                cj.ln() + log_lik
            } else {
                f64::NEG_INFINITY
            });
        }
        self.modes = new_modes;

        let norm = log_sum_exp(&log_post);
        if !norm.is_finite() {
            self.probs = vec![1.0 / m as f64; m];
            return Err(Error::ModeLikelihoodDegenerate);
        }
        self.probs = log_post.iter().map(|l| (l - norm).exp()).collect();
        Ok(())
    }
}

pub fn imm_step(
    state: &ImmState,
    cfg: &ImmConfig,
    meas: &impl Measurement,
    z: &DVector<f64>,
) -> Result<ImmState> {
    let mut next = state.clone();
    next.step(cfg, meas, z)?;
    Ok(next)
}

/// Stationary distribution of a row-stochastic matrix by power iteration.
pub fn stationary_distribution(transition: &DMatrix<f64>) -> Vec<f64> {
    let m = transition.nrows();
    let mut pi = DVector::from_element(m, 1.0 / m as f64);
    for _ in 0..10_000 {
        let next = transition.transpose() * &pi;
        let done = (&next - &pi).amax() < 1e-15;
        pi = next;
        if done {
            break;
        }
    }
    pi.iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::ekf::ekf_update;
    use crate::filters::measurement::MeasurementModel;

    fn two_mode_cfg() -> ImmConfig {
        ImmConfig::new(
            vec![
                MotionModel::ncv(1.0, vec![1e-2, 1e-2]).unwrap(),
                MotionModel::nca(1.0, vec![1e-3, 1e-3]).unwrap(),
            ],
            DMatrix::from_row_slice(2, 2, &[0.8, 0.2, 0.8, 0.2]),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn stationary_of_paper_matrix() {
        let pi = stationary_distribution(&DMatrix::from_row_slice(2, 2, &[0.8, 0.2, 0.8, 0.2]));
        assert!((pi[0] - 0.8).abs() < 1e-12);
        assert!((pi[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn single_mode_matches_ekf() {
        let model = MotionModel::ncv(1.0, vec![0.1, 0.1]).unwrap();
        let cfg = ImmConfig::new(vec![model.clone()], DMatrix::identity(1, 1), 1.0).unwrap();
        let meas = MeasurementModel::bearing_north([0.0, -600.0], 0.03).unwrap();
        let init = GaussianDensity::from_slices(
            &[150.0, 150.0, 5.0, 5.0],
            &[
                1e4, 0.0, 0.0, 0.0, 0.0, 1e4, 0.0, 0.0, 0.0, 0.0, 100.0, 0.0, 0.0, 0.0, 0.0, 100.0,
            ],
        )
        .unwrap();
        let mut imm = ImmState::from_full(&init, vec![1.0], &cfg).unwrap();
        let mut ekf = init;
        for k in 0..10 {
            let z = DVector::from_element(1, 0.7 + 0.01 * k as f64);
            imm.step(&cfg, &meas, &z).unwrap();
            ekf = ekf_update(&ekf_predict(&ekf, &model).unwrap(), &meas, &z).unwrap();
            assert!((imm.modes[0].mean() - ekf.mean()).amax() < 1e-12);
            assert!((imm.modes[0].cov() - ekf.cov()).amax() < 1e-12 * ekf.cov().amax());
        }
    }

    #[test]
    fn probabilities_stay_on_simplex() {
        let cfg = two_mode_cfg();
        let meas = MeasurementModel::bearing_north([0.0, 0.0], 0.03).unwrap();
        let init = GaussianDensity::new(
            DVector::from_vec(vec![150.0, 150.0, 5.0, 5.0, 0.0, 0.0]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![1e4, 1e4, 100.0, 100.0, 1.0, 1.0])),
        )
        .unwrap();
        let mut imm = ImmState::from_full(&init, vec![0.8, 0.2], &cfg).unwrap();
        for k in 0..20 {
            let z = DVector::from_element(1, 0.78 + 0.002 * k as f64);
            imm.step(&cfg, &meas, &z).unwrap();
            assert!((imm.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(imm.probs.iter().all(|p| *p >= 0.0));
            assert_eq!(imm.modes[0].dim(), 4);
            assert_eq!(imm.modes[1].dim(), 6);
        }
        let mix = imm.mixture(&cfg);
        assert_eq!(mix.dim(), 6);
        assert_eq!(mix.components()[0].cov()[(5, 5)], 1.0);
    }

    #[test]
    fn invalid_transition_rejected() {
        let models = vec![MotionModel::ncv(1.0, vec![1.0]).unwrap(); 2];
        assert!(ImmConfig::new(
            models,
            DMatrix::from_row_slice(2, 2, &[0.5, 0.4, 0.5, 0.5]),
            1.0
        )
        .is_err());
    }
}
