//! `trackfuse` command-line front end.
//!
//! Exit codes: 0 success, 2 input or configuration error, 3 fusion error,
//! 4 every run of every method diverged numerically, 5 property failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::fusion::{fuse_pair, Diagnostics, FusionWeight, Strategy};
use crate::gaussian::Density;
use crate::sim::{
    all_runs_failed, bench_csv, bench_fusion, cost_ratio, run_scenario, BenchConfig, Method,
    ScenarioConfig,
};
use crate::validate::{run_suite, ValidateOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_FUSION: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;
pub const EXIT_PROPERTY: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "trackfuse", version, about = "Track-to-track fusion toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fuse two densities read from JSON files.
    Fuse(FuseArgs),
    /// Run a Monte-Carlo scenario.
    Simulate(SimulateArgs),
    /// Time single fusion calls.
    Bench(BenchArgs),
    /// Run the property suite.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// First density (JSON: {"mean", "cov"} or {"weights", "components"}).
    pub a: PathBuf,
    /// Second density.
    pub b: PathBuf,
    #[arg(long, default_value = "hmd")]
    pub strategy: Strategy,
    #[arg(long, default_value_t = 0.5)]
    pub omega: f64,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Per-step CSV; stdout when absent.
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated methods replacing the configured list.
    #[arg(long, value_delimiter = ',')]
    pub strategy: Option<Vec<Method>>,
    #[arg(long)]
    pub omega: Option<f64>,
    /// Include wall-clock timing in the JSON summary.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Timing CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub pairs: usize,
    #[arg(long, default_value_t = 50)]
    pub reps: usize,
    #[arg(long, default_value_t = 5)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Cases per property (defaults vary per property).
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    #[arg(long, hide = true)]
    pub inject_broken_division: bool,
}

struct Failure {
    code: i32,
    message: String,
}

fn fail(code: i32, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| fail(EXIT_INPUT, format!("{}: {e}", p.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_density(path: &Path) -> Result<Density, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| fail(EXIT_INPUT, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| fail(EXIT_INPUT, format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct FuseOutput<'a> {
    strategy: Strategy,
    omega: f64,
    density: &'a Density,
    diagnostics: &'a Diagnostics,
}

fn cmd_fuse(args: &FuseArgs) -> Result<(), Failure> {
    let a = read_density(&args.a)?;
    let b = read_density(&args.b)?;
    let w = FusionWeight::new(args.omega).map_err(|e| fail(EXIT_INPUT, e.to_string()))?;
    if a.dim() != b.dim() {
        return Err(fail(
            EXIT_INPUT,
            format!("dimension mismatch: {} vs {}", a.dim(), b.dim()),
        ));
    }
    let r = fuse_pair(args.strategy, &a, &b, w).map_err(|e| fail(EXIT_FUSION, e.to_string()))?;
    let out = FuseOutput {
        strategy: args.strategy,
        omega: args.omega,
        density: &r.density,
        diagnostics: &r.diagnostics,
    };
    let text = serde_json::to_string_pretty(&out).expect("fused density serialises") + "\n";
    write_output(args.out.as_deref(), &text)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let mut cfg =
        ScenarioConfig::from_path(&args.config).map_err(|e| fail(EXIT_INPUT, e.to_string()))?;
    if let Some(r) = args.runs {
        cfg.runs = r;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(m) = &args.strategy {
        cfg.methods = m.clone();
    }
    if let Some(w) = args.omega {
        cfg.omega = w;
    }
    cfg.validate()
        .map_err(|e| fail(EXIT_INPUT, e.to_string()))?;
    let report = run_scenario(&cfg).map_err(|e| fail(EXIT_INPUT, e.to_string()))?;
    for m in &report.methods {
        eprintln!(
            "{:<16} track loss {:.3}  steady RMSE pos {:.2} m  vel {:.3} m/s  NEES inside {:.2}",
            m.method,
            m.track_loss,
            m.summary.steady_rmse_pos_m,
            m.summary.steady_rmse_vel_mps,
            m.summary.nees_inside_fraction
        );
    }
    write_output(args.out_csv.as_deref(), &report.to_csv())?;
    if let Some(p) = &args.out_json {
        write_output(Some(p), &report.to_json(args.timing))?;
    }
    if all_runs_failed(&report) {
        return Err(fail(EXIT_DIVERGED, "every run of every method failed"));
    }
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<(), Failure> {
    let cfg = BenchConfig {
        pairs: args.pairs.max(1),
        reps: args.reps.max(1),
        seed: args.seed,
        ..Default::default()
    };
    let rows = bench_fusion(&cfg).map_err(|e| fail(EXIT_FUSION, e.to_string()))?;
    for &d in &cfg.dims {
        if let Some(r) = cost_ratio(&rows, "gaussian", "hmd", "gmd", d, 1) {
            eprintln!("dim {d}: hmd/gmd cost ratio {r:.2}");
        }
    }
    for &n in &cfg.components {
        if let Some(r) = cost_ratio(&rows, "mixture", "hmd", "pcf", cfg.mixture_dim, n) {
            eprintln!("{n} components: hmd/pcf cost ratio {r:.2}");
        }
    }
    write_output(args.out.as_deref(), &bench_csv(&rows))
}

fn cmd_validate(args: &ValidateArgs) -> Result<(), Failure> {
    let opts = ValidateOptions {
        seed: args.seed,
        trials: args.trials,
        broken_division: args.inject_broken_division,
    };
    let results = run_suite(&opts);
    for r in &results {
        println!("{r}");
    }
    let failures = results.iter().filter(|r| !r.passed).count();
    if failures > 0 {
        return Err(fail(EXIT_PROPERTY, format!("{failures} properties failed")));
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Fuse(a) => cmd_fuse(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("trackfuse: {}", f.message);
            f.code
        }
    }
}
