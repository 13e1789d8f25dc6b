//! Monte-Carlo execution of a scenario.
//!
//! Every run draws one truth trajectory, one measurement sequence per sensor
//! and one initial-estimate perturbation per tracker from a counter-based
//! stream of the master seed. All methods of a run see the same draws.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{Method, ScenarioConfig};
use super::metrics::{
    nees, nees_bounds, MethodReport, MetricsReport, StepMetrics, Summary, TimingStats,
};
use super::truth::{gen_truth, psd_factor, sample_with_factor, simulate_measurements};
use crate::error::{Error, Result};
use crate::filters::{
    apply_feedback, ekf_predict, ekf_update, pair_tags, ImmConfig, ImmState, MeasurementModel,
    MotionModel, Stacked, TaggedMixture,
};
use crate::fusion::{
    fuse_amd, fuse_gmd_many, fuse_hmd_mixture_partial, fuse_hmd_recursive, fuse_naive_many,
    fuse_naive_mixture, fuse_pcf, FusionWeight, Strategy,
};
use crate::gaussian::{moment_match, Density, GaussianDensity};

/// Scenario pieces that do not change between runs.
struct Prepared<'a> {
    cfg: &'a ScenarioConfig,
    models: Vec<MotionModel>,
    imm: Option<(ImmConfig, Vec<f64>)>,
    sensors: Vec<MeasurementModel>,
    weights: Vec<f64>,
    full_dim: usize,
    nees_dim: usize,
    p0: DMatrix<f64>,
    p0_factor: DMatrix<f64>,
    /// Model the fusion centre uses to propagate between fusion instants.
    fc_model: MotionModel,
}

impl<'a> Prepared<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let models = cfg.motion_models()?;
        let d = cfg.spatial_dims();
        let fc_model = models
            .iter()
            .max_by_key(|m| m.state_dim())
            .cloned()
            .expect("at least one model");
        let full_dim = fc_model.state_dim();
        let sigma = cfg.tracker.p0_sigma();
        let p0 = DMatrix::from_diagonal(&DVector::from_iterator(
            full_dim,
            (0..full_dim).map(|i| sigma[i / d].powi(2)),
        ));
        let n = cfg.sensors.len();
        let weights = if n == 2 {
            vec![cfg.omega, 1.0 - cfg.omega]
        } else {
            vec![1.0 / n as f64; n]
        };
        Ok(Self {
            cfg,
            imm: cfg.imm_config()?,
            sensors: cfg.sensor_models()?,
            weights,
            full_dim,
            nees_dim: 2 * d,
            p0_factor: psd_factor(&p0),
            p0,
            fc_model,
            models,
        })
    }

    fn initial(&self, mean: &DVector<f64>) -> GaussianDensity {
        GaussianDensity::new(mean.clone(), self.p0.clone()).expect("P0 is SPD")
    }
}

/// Leading `n` components of `x`, zero-padded if `x` is shorter.
fn head(x: &DVector<f64>, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|i| if i < x.len() { x[i] } else { 0.0 }))
}

struct RunData {
    truth: Vec<DVector<f64>>,
    /// `meas[sensor][step]`.
    meas: Vec<Vec<DVector<f64>>>,
    local_init: Vec<DVector<f64>>,
    central_init: DVector<f64>,
}

fn draw_run(p: &Prepared, run: usize) -> Result<RunData> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.cfg.seed);
    rng.set_stream(run as u64);
    let truth = gen_truth(p.cfg, &mut rng)?;
    let meas = p
        .sensors
        .iter()
        .map(|s| simulate_measurements(&truth, s, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let x0 = head(&truth[0], p.full_dim);
    let local_init = p
        .sensors
        .iter()
        .map(|_| sample_with_factor(&x0, &p.p0_factor, &mut rng))
        .collect();
    let central_init = sample_with_factor(&x0, &p.p0_factor, &mut rng);
    Ok(RunData {
        truth,
        meas,
        local_init,
        central_init,
    })
}

#[derive(Debug, Clone, Default)]
struct Trace {
    pos_sq: Vec<f64>,
    vel_sq: Vec<f64>,
    nees: Vec<f64>,
    /// Mean NEES of the local tracks after their measurement update.
    local_nees: Vec<f64>,
    /// Mean squared position error of the local tracks.
    local_pos_sq: Vec<f64>,
    final_err: f64,
    failed: bool,
    fusion_time: Duration,
    fusion_calls: u64,
}

impl Trace {
    fn record(&mut self, p: &Prepared, est: &GaussianDensity, truth: &DVector<f64>) -> Result<()> {
        let d = p.nees_dim / 2;
        let g = est.marginal_head(p.nees_dim);
        let x = head(truth, p.nees_dim);
        let e = g.mean() - &x;
        self.pos_sq.push(e.rows(0, d).norm_squared());
        self.vel_sq.push(e.rows(d, d).norm_squared());
        self.nees.push(nees(&g, &x)?);
        self.final_err = e.rows(0, d).norm();
        Ok(())
    }
}

enum Local {
    Ekf(GaussianDensity),
    Imm(ImmState),
}

/// Multi-input fusion of Gaussian tracks.
pub fn fuse_gaussians(
    strategy: Strategy,
    inputs: &[GaussianDensity],
    weights: &[f64],
) -> Result<GaussianDensity> {
    if inputs.len() == 1 {
        return Ok(inputs[0].clone());
    }
    let refs: Vec<&GaussianDensity> = inputs.iter().collect();
    match strategy {
        Strategy::Naive => fuse_naive_many(&refs),
        Strategy::Gmd | Strategy::Pcf => fuse_gmd_many(&refs, weights),
        Strategy::Hmd => fuse_hmd_recursive(inputs, weights)?.density.to_gaussian(),
        Strategy::Amd => {
            let ds: Vec<Density> = inputs.iter().cloned().map(Density::from).collect();
            moment_match(&fuse_amd(&ds, weights)?)
        }
    }
}

/// Multi-input fusion of mode-tagged mixtures, applied pairwise in sensor
/// order. Each pairwise weight is chosen so the sequence reproduces the
/// `n`-input pool with `weights`.
pub fn fuse_tagged(
    strategy: Strategy,
    inputs: &[TaggedMixture],
    weights: &[f64],
) -> Result<TaggedMixture> {
    let mut acc = inputs[0].clone();
    let mut total = weights[0];
    for (next, &w) in inputs[1..].iter().zip(&weights[1..]) {
        if w == 0.0 {
            continue;
        }
        if total == 0.0 {
            acc = next.clone();
            total = w;
            continue;
        }
        let sum = total + w;
        let mixture = match strategy {
            Strategy::Naive => fuse_naive_mixture(&acc.mixture, &next.mixture)?,
            Strategy::Gmd | Strategy::Pcf => {
                fuse_pcf(&acc.mixture, &next.mixture, FusionWeight::new(total / sum)?)?
            }
            Strategy::Hmd => {
                let (m, kept) = fuse_hmd_mixture_partial(
                    &acc.mixture,
                    &next.mixture,
                    FusionWeight::new(w / sum)?,
                )?;
                let all = pair_tags(&acc, next);
                acc = TaggedMixture::new(m, kept.iter().map(|&i| all[i]).collect())?;
                total = sum;
                continue;
            }
            Strategy::Amd => {
                let m = fuse_amd(
                    &[acc.mixture.clone().into(), next.mixture.clone().into()],
                    &[total / sum, w / sum],
                )?;
                let tags = acc.tags.iter().chain(&next.tags).copied().collect();
                acc = TaggedMixture::new(m, tags)?;
                total = sum;
                continue;
            }
        };
        let tags = pair_tags(&acc, next);
        acc = TaggedMixture::new(mixture, tags)?;
        total = sum;
    }
    Ok(acc)
}

fn run_fusion(p: &Prepared, data: &RunData, strategy: Strategy, trace: &mut Trace) -> Result<()> {
    let cfg = p.cfg;
    let every = cfg.fusion_every();
    let mut locals: Vec<Local> = data
        .local_init
        .iter()
        .map(|x0| {
            let init = p.initial(x0);
            match &p.imm {
                None => Ok(Local::Ekf(init.marginal_head(p.models[0].state_dim()))),
                Some((imm, probs)) => {
                    Ok(Local::Imm(ImmState::from_full(&init, probs.clone(), imm)?))
                }
            }
        })
        .collect::<Result<_>>()?;
    let mut fc: Option<GaussianDensity> = None;

    for k in 1..=cfg.steps() {
        for (i, local) in locals.iter_mut().enumerate() {
            let z = &data.meas[i][k];
            match local {
                Local::Ekf(g) => {
                    *g = ekf_update(&ekf_predict(g, &p.models[0])?, &p.sensors[i], z)?;
                }
                Local::Imm(s) => {
                    let (imm, _) = p.imm.as_ref().unwrap();
                    match s.step(imm, &p.sensors[i], z) {
                        Ok(()) | Err(Error::ModeLikelihoodDegenerate) => {}
                        Err(e) => return Err(e),
                    }
                }
            }
        }

        let mut local_sum = 0.0;
        let mut local_sq = 0.0;
        for local in &locals {
            let g = match local {
                Local::Ekf(g) => g.clone(),
                Local::Imm(s) => moment_match(&s.mixture(&p.imm.as_ref().unwrap().0))?,
            };
            let x = head(&data.truth[k], p.nees_dim);
            local_sum += nees(&g.marginal_head(p.nees_dim), &x)?;
            local_sq +=
                (g.mean().rows(0, p.nees_dim / 2) - x.rows(0, p.nees_dim / 2)).norm_squared();
        }
        trace.local_nees.push(local_sum / locals.len() as f64);
        trace.local_pos_sq.push(local_sq / locals.len() as f64);

        if (k - 1) % every == 0 {
            let start = Instant::now();
            let fused = match &p.imm {
                None => {
                    let mut inputs: Vec<GaussianDensity> = locals
                        .iter()
                        .map(|l| match l {
                            Local::Ekf(g) => g.clone(),
                            Local::Imm(_) => unreachable!(),
                        })
                        .collect();
                    let fused = match (&fc, cfg.fusion_memory) {
                        (Some(prev), true) => {
                            inputs.insert(0, ekf_predict(prev, &p.fc_model)?);
                            let w = vec![1.0 / inputs.len() as f64; inputs.len()];
                            fuse_gaussians(strategy, &inputs, &w)?
                        }
                        _ => fuse_gaussians(strategy, &inputs, &p.weights)?,
                    };
                    trace.fusion_time += start.elapsed();
                    if cfg.feedback {
                        for l in locals.iter_mut() {
                            if let Local::Ekf(g) = l {
                                *g = fused.marginal_head(g.dim());
                            }
                        }
                    }
                    fused
                }
                Some((imm, _)) => {
                    let inputs: Vec<TaggedMixture> = locals
                        .iter()
                        .map(|l| match l {
                            Local::Imm(s) => TaggedMixture::from_imm(s, imm),
                            Local::Ekf(_) => unreachable!(),
                        })
                        .collect();
                    let fused = fuse_tagged(strategy, &inputs, &p.weights)?;
                    trace.fusion_time += start.elapsed();
                    if cfg.feedback {
                        let fed = fused.prune(cfg.prune_to).select_per_mode(imm.mode_count());
                        for l in locals.iter_mut() {
                            if let Local::Imm(s) = l {
                                *s = apply_feedback(s, imm, &fed)?;
                            }
                        }
                    }
                    moment_match(&fused.mixture)?
                }
            };
            trace.fusion_calls += 1;
            fc = Some(fused);
        } else {
            let prev = fc.as_ref().expect("fusion happens at the first step");
            fc = Some(ekf_predict(prev, &p.fc_model)?);
        }
        trace.record(p, fc.as_ref().unwrap(), &data.truth[k])?;
    }
    Ok(())
}

fn run_centralized(
    p: &Prepared,
    data: &RunData,
    model: &MotionModel,
    trace: &mut Trace,
) -> Result<()> {
    let stacked = Stacked(&p.sensors);
    let mut g = p
        .initial(&data.central_init)
        .marginal_head(model.state_dim());
    for k in 1..=p.cfg.steps() {
        let z = DVector::from_iterator(
            stacked_dim(&p.sensors),
            data.meas.iter().flat_map(|m| m[k].iter().copied()),
        );
        g = ekf_update(&ekf_predict(&g, model)?, &stacked, &z)?;
        trace.record(p, &g, &data.truth[k])?;
    }
    Ok(())
}

fn stacked_dim(sensors: &[MeasurementModel]) -> usize {
    sensors.iter().map(|s| s.variances.len()).sum()
}

fn run_method(p: &Prepared, data: &RunData, method: Method) -> Trace {
    let mut trace = Trace::default();
    let outcome = match method {
        Method::Fusion(s) => run_fusion(p, data, s, &mut trace),
        Method::Centralized(kind) => p
            .cfg
            .centralized_model(kind)
            .and_then(|m| run_centralized(p, data, &m, &mut trace)),
    };
    if outcome.is_err() {
        trace.failed = true;
        trace.final_err = f64::INFINITY;
    }
    trace
}

fn thread_pool() -> rayon::ThreadPool {
    let threads = std::env::var("TRACKFUSE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
}

/// Runs every configured method over `cfg.runs` Monte-Carlo runs.
/// `TRACKFUSE_THREADS` caps the number of worker threads.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<MetricsReport> {
    let p = Prepared::new(cfg)?;
    let wall = Instant::now();
    let per_run: Vec<Result<Vec<Trace>>> = thread_pool().install(|| {
        (0..cfg.runs)
            .into_par_iter()
            .map(|run| {
                let data = draw_run(&p, run)?;
                Ok(cfg
                    .methods
                    .iter()
                    .map(|m| run_method(&p, &data, *m))
                    .collect())
            })
            .collect()
    });
    let per_run = per_run.into_iter().collect::<Result<Vec<_>>>()?;
    let wall_s = wall.elapsed().as_secs_f64();

    let methods = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(mi, m)| {
            let traces: Vec<&Trace> = per_run.iter().map(|r| &r[mi]).collect();
            aggregate(&p, m.name(), &traces, wall_s)
        })
        .collect();

    Ok(MetricsReport {
        scenario: cfg.name.clone(),
        runs: cfg.runs,
        seed: cfg.seed,
        nees_dim: p.nees_dim,
        transient_steps: cfg.transient_steps,
        steady_state_steps: cfg.steady_state_steps,
        methods,
    })
}

fn aggregate(p: &Prepared, method: String, traces: &[&Trace], wall_s: f64) -> MethodReport {
    let cfg = p.cfg;
    let tau = cfg.track_loss_threshold_m;
    let steps = cfg.steps();
    let failed_runs: Vec<usize> = (0..traces.len()).filter(|&r| traces[r].failed).collect();
    let excluded_runs: Vec<usize> = (0..traces.len())
        .filter(|&r| traces[r].failed || !(traces[r].final_err < tau))
        .collect();
    let included: Vec<&Trace> = (0..traces.len())
        .filter(|r| !excluded_runs.contains(r))
        .map(|r| traces[r])
        .collect();
    let m = included.len();
    let (lo, hi) = nees_bounds(p.nees_dim, m, cfg.nees_bounds);

    let mean_at = |k: usize, f: fn(&Trace) -> &Vec<f64>| -> f64 {
        if m == 0 {
            return f64::NAN;
        }
        included.iter().map(|t| f(t)[k]).sum::<f64>() / m as f64
    };
    let has_local = included.iter().all(|t| t.local_nees.len() == steps);
    let step_metrics: Vec<StepMetrics> = (0..steps)
        .map(|k| StepMetrics {
            step: k + 1,
            time_s: (k + 1) as f64 * cfg.dt_s,
            rmse_pos_m: mean_at(k, |t| &t.pos_sq).sqrt(),
            rmse_vel_mps: mean_at(k, |t| &t.vel_sq).sqrt(),
            nees: mean_at(k, |t| &t.nees),
            local_nees: if has_local {
                mean_at(k, |t| &t.local_nees)
            } else {
                f64::NAN
            },
            local_rmse_pos_m: if has_local {
                mean_at(k, |t| &t.local_pos_sq).sqrt()
            } else {
                f64::NAN
            },
            nees_lo: lo,
            nees_hi: hi,
        })
        .collect();

    let window = &step_metrics[steps - cfg.steady_state_steps..];
    let post = &step_metrics[cfg.transient_steps..];
    let frac = |pred: &dyn Fn(&StepMetrics) -> bool| {
        post.iter().filter(|s| pred(s)).count() as f64 / post.len() as f64
    };
    let summary = Summary {
        steady_rmse_pos_m: window.iter().map(|s| s.rmse_pos_m).sum::<f64>() / window.len() as f64,
        steady_rmse_vel_mps: window.iter().map(|s| s.rmse_vel_mps).sum::<f64>()
            / window.len() as f64,
        nees_inside_fraction: frac(&|s| s.nees >= s.nees_lo && s.nees <= s.nees_hi),
        nees_above_fraction: frac(&|s| s.nees > s.nees_hi),
    };

    let calls: u64 = traces.iter().map(|t| t.fusion_calls).sum();
    let time: Duration = traces.iter().map(|t| t.fusion_time).sum();
    MethodReport {
        method,
        track_loss: excluded_runs.len() as f64 / traces.len() as f64,
        excluded_runs,
        failed_runs,
        included_runs: m,
        summary,
        steps: step_metrics,
        timing: TimingStats {
            fusion_calls: calls,
            mean_fusion_call_us: if calls > 0 {
                time.as_secs_f64() * 1e6 / calls as f64
            } else {
                0.0
            },
            wall_s,
        },
    }
}

/// `true` when every run of every method stopped on a numerical error.
pub fn all_runs_failed(report: &MetricsReport) -> bool {
    report
        .methods
        .iter()
        .all(|m| m.failed_runs.len() == report.runs)
}
