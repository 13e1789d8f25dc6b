use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;

use super::config::{ScenarioConfig, TruthConfig, KNOT_MPS};
use crate::error::Result;
use crate::filters::{wrap_angle, Measurement, MeasurementModel, MotionModel};

/// Draws `x ~ N(mean, L Lᵀ)` given the lower Cholesky factor `L`.
pub fn sample_with_factor(
    mean: &DVector<f64>,
    l: &DMatrix<f64>,
    rng: &mut impl Rng,
) -> DVector<f64> {
    let z = DVector::from_iterator(
        mean.len(),
        (0..mean.len()).map(|_| rng.sample::<f64, _>(StandardNormal)),
    );
    mean + l * z
}

/// Lower factor of a PSD matrix, tolerating exact zeros on the diagonal
/// (e.g. a process noise with `q = 0` on one axis).
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 1e-300 {
            continue;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    l
}

/// Discrete NCV rollout: `steps + 1` states starting from `initial`.
pub fn gen_truth_ncv3d(
    initial: &DVector<f64>,
    model: &MotionModel,
    steps: usize,
    rng: &mut impl Rng,
) -> Vec<DVector<f64>> {
    let (f, q) = model.matrices();
    let l = psd_factor(&q);
    let zero = DVector::zeros(initial.len());
    let mut out = Vec::with_capacity(steps + 1);
    out.push(initial.clone());
    for _ in 0..steps {
        let next = &f * out.last().unwrap() + sample_with_factor(&zero, &l, rng);
        out.push(next);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineParams {
    pub start: [f64; 2],
    pub speed_mps: f64,
    pub amplitude_m: f64,
    pub wavelength_m: f64,
    pub rotation_rad: f64,
}

const SINE_SUBSTEPS: usize = 50;

/// Sine path `(u, A sin(2πu/λ))` rotated by the configured angle and
/// traversed at constant arc-length speed. States are `[p; v; a]` in 2D.
pub fn gen_truth_sine2d(p: &SineParams, dt: f64, steps: usize) -> Vec<DVector<f64>> {
    let k = 2.0 * PI / p.wavelength_m;
    let a = p.amplitude_m;
    let (s, c) = p.rotation_rad.sin_cos();
    let rot = Matrix2::new(c, -s, s, c);
    let slope = |u: f64| a * k * (k * u).cos();
    let du_dt = |u: f64| p.speed_mps / (1.0 + slope(u).powi(2)).sqrt();

    let state_at = |u: f64| {
        let g = slope(u);
        let g1 = -a * k * k * (k * u).sin();
        let norm = (1.0 + g * g).sqrt();
        let pos = rot * Vector2::new(u, a * (k * u).sin()) + Vector2::new(p.start[0], p.start[1]);
        let vel = rot * (Vector2::new(1.0, g) * (p.speed_mps / norm));
        let acc = rot * (Vector2::new(-g, 1.0) * (p.speed_mps.powi(2) * g1 / norm.powi(4)));
        DVector::from_vec(vec![pos.x, pos.y, vel.x, vel.y, acc.x, acc.y])
    };

    let h = dt / SINE_SUBSTEPS as f64;
    let mut u = 0.0;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(state_at(u));
    for _ in 0..steps {
        for _ in 0..SINE_SUBSTEPS {
            let k1 = du_dt(u);
            let k2 = du_dt(u + 0.5 * h * k1);
            let k3 = du_dt(u + 0.5 * h * k2);
            let k4 = du_dt(u + h * k3);
            u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        out.push(state_at(u));
    }
    out
}

/// Truth trajectory for a scenario. Sine paths ignore `rng`.
pub fn gen_truth(cfg: &ScenarioConfig, rng: &mut impl Rng) -> Result<Vec<DVector<f64>>> {
    let steps = cfg.steps();
    match &cfg.truth {
        TruthConfig::Ncv3d { initial_state, q } => {
            let model = MotionModel::ncv(cfg.dt_s, q.clone())?;
            Ok(gen_truth_ncv3d(
                &DVector::from_column_slice(initial_state),
                &model,
                steps,
                rng,
            ))
        }
        TruthConfig::Sine2d {
            start,
            speed_knots,
            amplitude_m,
            wavelength_m,
            rotation_deg,
        } => Ok(gen_truth_sine2d(
            &SineParams {
                start: *start,
                speed_mps: speed_knots * KNOT_MPS,
                amplitude_m: *amplitude_m,
                wavelength_m: *wavelength_m,
                rotation_rad: rotation_deg.to_radians(),
            },
            cfg.dt_s,
            steps,
        )),
    }
}

/// `z_k = h(x_k) + v_k`, `v_k ~ N(0, R)`, with angles wrapped.
pub fn simulate_measurements(
    truth: &[DVector<f64>],
    sensor: &MeasurementModel,
    rng: &mut impl Rng,
) -> Result<Vec<DVector<f64>>> {
    let sd: Vec<f64> = sensor.variances.iter().map(|v| v.sqrt()).collect();
    let mask = sensor.angle_mask();
    truth
        .iter()
        .map(|x| {
            let mut z = sensor.predict(x)?;
            for i in 0..z.len() {
                z[i] += sd[i] * rng.sample::<f64, _>(StandardNormal);
                if mask[i] {
                    z[i] = wrap_angle(z[i]);
                }
            }
            Ok(z)
        })
        .collect()
}
