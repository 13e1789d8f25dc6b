//! Track-to-track fusion toolkit.
//!
//! * [`gaussian`]: Gaussian and Gaussian-mixture algebra.
//! * [`fusion`]: naive, covariance intersection (GMD), arithmetic mean (AMD),
//!   pseudo-Chernoff (PCF) and harmonic mean density (HMD) fusion.
//! * [`filters`]: EKF and mixed-dimension IMM local trackers.
//! * [`sim`]: scenario generation, Monte-Carlo runner and metrics.
//! * [`cli`]: the `trackfuse` command-line front end.

// `!(x > 0.0)` guards are meant to reject NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod filters;
pub mod fusion;
pub mod gaussian;
pub mod linalg;
pub mod quadrature;
pub mod sim;
pub mod validate;

pub use error::{Error, Result};
pub use gaussian::{Density, GaussianDensity, GaussianMixture, ScaledGaussian};
