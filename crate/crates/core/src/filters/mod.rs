//! Local trackers.

mod ekf;
mod feedback;
mod imm;
mod measurement;
mod motion;

pub use ekf::{ekf_predict, ekf_update, ekf_update_with_likelihood};
pub use feedback::{
    apply_feedback, pair_tag, pair_tags, prune_indices, prune_mixture, TaggedMixture,
};
pub use imm::{imm_step, pad_density, stationary_distribution, ImmConfig, ImmState};
pub use measurement::{wrap_angle, Measurement, MeasurementKind, MeasurementModel, Stacked};
pub use motion::{nca_matrices, ncv_matrices, MotionKind, MotionModel};
