//! Deterministic trapezoid quadrature on refining tensor grids (1D and 2D).
//!
//! Used for normalising constants and divergences of non-Gaussian pooled
//! densities. Integrands are assumed to decay to zero at the box edges, where
//! the trapezoid rule converges very quickly.

use crate::error::{Error, Result};
use crate::gaussian::Density;

const START_POINTS: usize = 201;
const MAX_REFINEMENTS_1D: usize = 9;
const MAX_REFINEMENTS_2D: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn grid(&self, points: usize) -> impl Iterator<Item = f64> + '_ {
        let h = (self.hi - self.lo) / (points - 1) as f64;
        (0..points).map(move |i| self.lo + h * i as f64)
    }
}

/// Integration box covering every component of every density to
/// `mean ± sigmas · σ` along each axis.
pub fn bounding_box(densities: &[&Density], sigmas: f64) -> Vec<Interval> {
    let dim = densities[0].dim();
    (0..dim)
        .map(|axis| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for d in densities {
                for (_, c) in d.to_mixture().iter() {
                    let sd = c.cov()[(axis, axis)].sqrt();
                    lo = lo.min(c.mean()[axis] - sigmas * sd);
                    hi = hi.max(c.mean()[axis] + sigmas * sd);
                }
            }
            Interval::new(lo, hi)
        })
        .collect()
}

fn trapezoid_1d(f: &impl Fn(f64) -> f64, iv: Interval, points: usize) -> f64 {
    let h = (iv.hi - iv.lo) / (points - 1) as f64;
    let mut sum = 0.5 * (f(iv.lo) + f(iv.hi));
    for i in 1..points - 1 {
        sum += f(iv.lo + h * i as f64);
    }
    sum * h
}

fn converged(prev: f64, next: f64, rel_tol: f64) -> bool {
    (next - prev).abs() <= rel_tol * next.abs().max(1e-300)
}

/// Refines by halving the step until successive estimates agree to `rel_tol`.
pub fn integrate_1d(f: impl Fn(f64) -> f64, iv: Interval, rel_tol: f64) -> Result<f64> {
    let mut points = START_POINTS;
    let mut prev = trapezoid_1d(&f, iv, points);
    for _ in 0..MAX_REFINEMENTS_1D {
        points = 2 * points - 1;
        let next = trapezoid_1d(&f, iv, points);
        if converged(prev, next, rel_tol) {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::QuadratureNonConvergence {
        refinements: MAX_REFINEMENTS_1D,
    })
}

fn trapezoid_2d(f: &impl Fn(f64, f64) -> f64, ix: Interval, iy: Interval, points: usize) -> f64 {
    let hx = (ix.hi - ix.lo) / (points - 1) as f64;
    let hy = (iy.hi - iy.lo) / (points - 1) as f64;
    let weight = |i: usize| if i == 0 || i == points - 1 { 0.5 } else { 1.0 };
    let mut sum = 0.0;
    for i in 0..points {
        let x = ix.lo + hx * i as f64;
        let wi = weight(i);
        for j in 0..points {
            sum += wi * weight(j) * f(x, iy.lo + hy * j as f64);
        }
    }
    sum * hx * hy
}

pub fn integrate_2d(
    f: impl Fn(f64, f64) -> f64,
    ix: Interval,
    iy: Interval,
    rel_tol: f64,
) -> Result<f64> {
    let mut points = START_POINTS;
    let mut prev = trapezoid_2d(&f, ix, iy, points);
    for _ in 0..MAX_REFINEMENTS_2D {
        points = 2 * points - 1;
        let next = trapezoid_2d(&f, ix, iy, points);
        if converged(prev, next, rel_tol) {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::QuadratureNonConvergence {
        refinements: MAX_REFINEMENTS_2D,
    })
}

/// Integrates `f` over a 1D or 2D box.
pub fn integrate_box(f: impl Fn(&[f64]) -> f64, bounds: &[Interval], rel_tol: f64) -> Result<f64> {
    match bounds {
        [ix] => integrate_1d(|x| f(&[x]), *ix, rel_tol),
        [ix, iy] => integrate_2d(|x, y| f(&[x, y]), *ix, *iy, rel_tol),
        _ => Err(Error::Unsupported(format!(
            "quadrature supports 1 or 2 dimensions, got {}",
            bounds.len()
        ))),
    }
}
