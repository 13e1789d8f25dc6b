use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SINGULAR_RANGE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    /// `(range, azimuth = atan2(y, x), elevation)` in 3D.
    RangeAzEl,
    /// Bearing clockwise from north, `atan2(x, y)`, in 2D.
    BearingNorth,
}

/// Wraps an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Anything that maps a state to a measurement with additive Gaussian noise.
pub trait Measurement {
    fn meas_dim(&self) -> usize;
    fn predict(&self, state: &DVector<f64>) -> Result<DVector<f64>>;
    /// Jacobian of `predict` with `state_dim` columns.
    fn jacobian(&self, state: &DVector<f64>, state_dim: usize) -> Result<DMatrix<f64>>;
    fn noise(&self) -> DMatrix<f64>;
    /// Which measurement components are angles (wrapped on subtraction).
    fn angle_mask(&self) -> Vec<bool>;

    /// `z − h(x)` with angle components wrapped.
    fn innovation(&self, z: &DVector<f64>, predicted: &DVector<f64>) -> DVector<f64> {
        let mut nu = z - predicted;
        for (i, is_angle) in self.angle_mask().into_iter().enumerate() {
            if is_angle {
                nu[i] = wrap_angle(nu[i]);
            }
        }
        nu
    }
}

/// Sensor at a fixed position. Positions are read from the leading
/// components of the state vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementModel {
    pub kind: MeasurementKind,
    pub sensor: Vec<f64>,
    /// Diagonal of `R` (squared metres / squared radians).
    pub variances: Vec<f64>,
}

impl MeasurementModel {
    pub fn new(kind: MeasurementKind, sensor: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let (pos_dim, meas_dim) = match kind {
            MeasurementKind::RangeAzEl => (3, 3),
            MeasurementKind::BearingNorth => (2, 1),
        };
        if sensor.len() != pos_dim {
            return Err(Error::DimensionMismatch {
                expected: pos_dim,
                actual: sensor.len(),
            });
        }
        if variances.len() != meas_dim {
            return Err(Error::DimensionMismatch {
                expected: meas_dim,
                actual: variances.len(),
            });
        }
        if variances.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config(
                "measurement noise variances must be positive".into(),
            ));
        }
        Ok(Self {
            kind,
            sensor,
            variances,
        })
    }

    /// Range/azimuth/elevation sensor from standard deviations (m, rad, rad).
    pub fn range_az_el(
        sensor: [f64; 3],
        sigma_r: f64,
        sigma_az: f64,
        sigma_el: f64,
    ) -> Result<Self> {
        Self::new(
            MeasurementKind::RangeAzEl,
            sensor.to_vec(),
            vec![sigma_r.powi(2), sigma_az.powi(2), sigma_el.powi(2)],
        )
    }

    /// Bearings-only sensor from the bearing standard deviation (rad).
    pub fn bearing_north(sensor: [f64; 2], sigma: f64) -> Result<Self> {
        Self::new(
            MeasurementKind::BearingNorth,
            sensor.to_vec(),
            vec![sigma * sigma],
        )
    }

    pub fn position_dim(&self) -> usize {
        self.sensor.len()
    }

    fn relative(&self, state: &DVector<f64>) -> Result<Vec<f64>> {
        if state.len() < self.sensor.len() {
            return Err(Error::DimensionMismatch {
                expected: self.sensor.len(),
                actual: state.len(),
            });
        }
        Ok(self
            .sensor
            .iter()
            .enumerate()
            .map(|(i, s)| state[i] - s)
            .collect())
    }
}

impl Measurement for MeasurementModel {
    fn meas_dim(&self) -> usize {
        self.variances.len()
    }

    fn predict(&self, state: &DVector<f64>) -> Result<DVector<f64>> {
        let d = self.relative(state)?;
        match self.kind {
            MeasurementKind::RangeAzEl => {
                let horiz = d[0].hypot(d[1]);
                let range = horiz.hypot(d[2]);
                if horiz < SINGULAR_RANGE {
                    return Err(Error::MeasurementSingular);
                }
                Ok(DVector::from_vec(vec![
                    range,
                    d[1].atan2(d[0]),
                    d[2].atan2(horiz),
                ]))
            }
            MeasurementKind::BearingNorth => {
                if d[0].hypot(d[1]) < SINGULAR_RANGE {
                    return Err(Error::MeasurementSingular);
                }
                Ok(DVector::from_element(1, d[0].atan2(d[1])))
            }
        }
    }

    fn jacobian(&self, state: &DVector<f64>, state_dim: usize) -> Result<DMatrix<f64>> {
        let d = self.relative(state)?;
        let mut h = DMatrix::zeros(self.meas_dim(), state_dim);
        match self.kind {
            MeasurementKind::RangeAzEl => {
                let rho2 = d[0] * d[0] + d[1] * d[1];
                let rho = rho2.sqrt();
                let r2 = rho2 + d[2] * d[2];
                let r = r2.sqrt();
                if rho < SINGULAR_RANGE {
                    return Err(Error::MeasurementSingular);
                }
                h[(0, 0)] = d[0] / r;
                h[(0, 1)] = d[1] / r;
                h[(0, 2)] = d[2] / r;
                h[(1, 0)] = -d[1] / rho2;
                h[(1, 1)] = d[0] / rho2;
                h[(2, 0)] = -d[0] * d[2] / (r2 * rho);
                h[(2, 1)] = -d[1] * d[2] / (r2 * rho);
                h[(2, 2)] = rho / r2;
            }
            MeasurementKind::BearingNorth => {
                let r2 = d[0] * d[0] + d[1] * d[1];
                if r2.sqrt() < SINGULAR_RANGE {
                    return Err(Error::MeasurementSingular);
                }
                h[(0, 0)] = d[1] / r2;
                h[(0, 1)] = -d[0] / r2;
            }
        }
        Ok(h)
    }

    fn noise(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.variances))
    }

    fn angle_mask(&self) -> Vec<bool> {
        match self.kind {
            MeasurementKind::RangeAzEl => vec![false, true, true],
            MeasurementKind::BearingNorth => vec![true],
        }
    }
}

/// Several sensors observed at once (centralised processing).
#[derive(Debug, Clone, Copy)]
pub struct Stacked<'a>(pub &'a [MeasurementModel]);

impl Measurement for Stacked<'_> {
    fn meas_dim(&self) -> usize {
        self.0.iter().map(|m| m.meas_dim()).sum()
    }

    fn predict(&self, state: &DVector<f64>) -> Result<DVector<f64>> {
        let parts = self
            .0
            .iter()
            .map(|m| m.predict(state))
            .collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_iterator(
            self.meas_dim(),
            parts.iter().flat_map(|p| p.iter().copied()),
        ))
    }

    fn jacobian(&self, state: &DVector<f64>, state_dim: usize) -> Result<DMatrix<f64>> {
        let mut h = DMatrix::zeros(self.meas_dim(), state_dim);
        let mut row = 0;
        for m in self.0 {
            let hm = m.jacobian(state, state_dim)?;
            h.view_mut((row, 0), (hm.nrows(), state_dim)).copy_from(&hm);
            row += hm.nrows();
        }
        Ok(h)
    }

    fn noise(&self) -> DMatrix<f64> {
        let v: Vec<f64> = self
            .0
            .iter()
            .flat_map(|m| m.variances.iter().copied())
            .collect();
        DMatrix::from_diagonal(&DVector::from_vec(v))
    }

    fn angle_mask(&self) -> Vec<bool> {
        self.0.iter().flat_map(|m| m.angle_mask()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_az_el_on_axis() {
        let m = MeasurementModel::range_az_el([0.0; 3], 1.0, 0.01, 0.01).unwrap();
        let z = m
            .predict(&DVector::from_vec(vec![1000.0, 0.0, 0.0, 1.0, 2.0, 3.0]))
            .unwrap();
        assert!((z[0] - 1000.0).abs() < 1e-12);
        assert_eq!(z[1], 0.0);
        assert_eq!(z[2], 0.0);
    }

    #[test]
    fn bearing_diagonal() {
        let m = MeasurementModel::bearing_north([0.0, 0.0], 0.01).unwrap();
        let z = m
            .predict(&DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0]))
            .unwrap();
        assert!((z[0] - PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn singular_at_sensor() {
        let m = MeasurementModel::bearing_north([5.0, 5.0], 0.01).unwrap();
        let x = DVector::from_vec(vec![5.0, 5.0, 1.0, 1.0]);
        assert_eq!(m.predict(&x), Err(Error::MeasurementSingular));
        assert!(m.jacobian(&x, 4).is_err());
    }

    #[test]
    fn wrap_rule() {
        let m = MeasurementModel::bearing_north([0.0, 0.0], 0.01).unwrap();
        let z = DVector::from_element(1, 179f64.to_radians());
        let pred = DVector::from_element(1, (-179f64).to_radians());
        let nu = m.innovation(&z, &pred);
        assert!((nu[0] + 2f64.to_radians()).abs() < 1e-12);
        assert!((wrap_angle(PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
    }
}
