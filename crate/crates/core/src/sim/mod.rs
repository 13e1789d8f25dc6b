//! Scenario generation, Monte-Carlo runner and metrics.

mod bench;
mod config;
mod metrics;
mod runner;
mod truth;

pub use bench::{bench_csv, bench_fusion, cost_ratio, BenchConfig, BenchRow};
pub use config::{
    Method, ModelConfig, NeesBounds, ScenarioConfig, SensorConfig, TrackerConfig, TruthConfig,
    KNOT_MPS,
};
pub use metrics::{
    compute_nees, nees, nees_bounds, track_loss_rate, MethodReport, MetricsReport, NeesSeries,
    StepMetrics, Summary, TimingStats,
};
pub use runner::{all_runs_failed, fuse_gaussians, fuse_tagged, run_scenario};
pub use truth::{
    gen_truth, gen_truth_ncv3d, gen_truth_sine2d, psd_factor, sample_with_factor,
    simulate_measurements, SineParams,
};
