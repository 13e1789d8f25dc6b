use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionKind {
    /// Nearly constant velocity, state `[p; v]`.
    Ncv,
    /// Nearly constant acceleration, state `[p; v; a]`.
    Nca,
}

/// Discrete white-noise kinematic model. States are stored block-wise
/// (all positions, then all velocities, then all accelerations), and `q`
/// holds one process-noise intensity per spatial axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionModel {
    pub kind: MotionKind,
    pub dt: f64,
    pub q: Vec<f64>,
}

impl MotionModel {
    pub fn new(kind: MotionKind, dt: f64, q: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        if q.is_empty() || q.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config(
                "process noise intensities must be >= 0".into(),
            ));
        }
        Ok(Self { kind, dt, q })
    }

    pub fn ncv(dt: f64, q: Vec<f64>) -> Result<Self> {
        Self::new(MotionKind::Ncv, dt, q)
    }

    pub fn nca(dt: f64, q: Vec<f64>) -> Result<Self> {
        Self::new(MotionKind::Nca, dt, q)
    }

    pub fn spatial_dims(&self) -> usize {
        self.q.len()
    }

    pub fn order(&self) -> usize {
        match self.kind {
            MotionKind::Ncv => 2,
            MotionKind::Nca => 3,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.order() * self.spatial_dims()
    }

    /// Transition and process-noise matrices `(F, Q)`.
    pub fn matrices(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        match self.kind {
            MotionKind::Ncv => ncv_matrices(self),
            MotionKind::Nca => nca_matrices(self),
        }
    }
}

fn kinematic_matrices(
    dims: usize,
    q: &[f64],
    f_block: &[&[f64]],
    q_block: &[&[f64]],
) -> (DMatrix<f64>, DMatrix<f64>) {
    let order = f_block.len();
    let n = order * dims;
    let mut f = DMatrix::zeros(n, n);
    let mut qm = DMatrix::zeros(n, n);
    for axis in 0..dims {
        for r in 0..order {
            for c in 0..order {
                f[(r * dims + axis, c * dims + axis)] = f_block[r][c];
                qm[(r * dims + axis, c * dims + axis)] = q[axis] * q_block[r][c];
            }
        }
    }
    (f, qm)
}

/// `F = [[I, ΔT·I], [0, I]]`,
/// `Q = q̃ [[ΔT³/3, ΔT²/2], [ΔT²/2, ΔT]]` applied per axis.
pub fn ncv_matrices(model: &MotionModel) -> (DMatrix<f64>, DMatrix<f64>) {
    let t = model.dt;
    kinematic_matrices(
        model.spatial_dims(),
        &model.q,
        &[&[1.0, t], &[0.0, 1.0]],
        &[&[t.powi(3) / 3.0, t * t / 2.0], &[t * t / 2.0, t]],
    )
}

/// Three-block nearly-constant-acceleration model with Wiener-process
/// acceleration noise.
pub fn nca_matrices(model: &MotionModel) -> (DMatrix<f64>, DMatrix<f64>) {
    let t = model.dt;
    let (t2, t3, t4, t5) = (t * t, t.powi(3), t.powi(4), t.powi(5));
    kinematic_matrices(
        model.spatial_dims(),
        &model.q,
        &[&[1.0, t, t2 / 2.0], &[0.0, 1.0, t], &[0.0, 0.0, 1.0]],
        &[
            &[t5 / 20.0, t4 / 8.0, t3 / 6.0],
            &[t4 / 8.0, t3 / 3.0, t2 / 2.0],
            &[t3 / 6.0, t2 / 2.0, t],
        ],
    )
}
