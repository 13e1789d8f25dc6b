use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_trackfuse");

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn scenario1_variant(dir: &Path, name: &str, edits: &[(&str, &str)]) -> String {
    let mut text = std::fs::read_to_string(configs().join("scenario1.cfg")).unwrap();
    for (from, to) in edits {
        assert!(text.contains(from), "{from}");
        text = text.replace(from, to);
    }
    write(dir, name, &text)
}

#[test]
fn fuse_scalar_pair() {
    let d = TempDir::new().unwrap();
    let a = write(d.path(), "a.json", r#"{"mean": [50.0], "cov": [[10.0]]}"#);
    let b = write(d.path(), "b.json", r#"{"mean": [-30.0], "cov": [[20.0]]}"#);
    let o = run(&["fuse", &a, &b]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let mean = v["density"]["mean"][0].as_f64().unwrap();
    let var = v["density"]["cov"][0][0].as_f64().unwrap();
    assert!((mean - 23.39).abs() < 0.01 && (var - 6.69).abs() < 0.01);
    assert!(v["diagnostics"]["pd_margin"].as_f64().unwrap() > 0.0);

    let out = d.path().join("f.json");
    let o = run(&[
        "fuse",
        &a,
        &b,
        "--strategy",
        "gmd",
        "--omega",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(v["density"]["mean"][0].as_f64().unwrap(), 50.0);
}

#[test]
fn fuse_mixtures() {
    let d = TempDir::new().unwrap();
    let a = write(
        d.path(),
        "a.json",
        r#"{"weights": [0.5, 0.5], "components": [{"mean": [0.0], "cov": [[1.0]]}, {"mean": [0.5], "cov": [[1.2]]}]}"#,
    );
    let b = write(d.path(), "b.json", r#"{"mean": [0.2], "cov": [[0.9]]}"#);
    for st in ["naive", "pcf", "amd", "hmd"] {
        let o = run(&["fuse", &a, &b, "--strategy", st]);
        assert_eq!(code(&o), 0, "{st}: {}", String::from_utf8_lossy(&o.stderr));
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert!(v["density"]["weights"].is_array(), "{st}");
    }
}

#[test]
fn input_errors_exit_2() {
    let d = TempDir::new().unwrap();
    let good = write(d.path(), "g.json", r#"{"mean": [1.0], "cov": [[1.0]]}"#);
    let broken = write(d.path(), "x.json", "{\"mean\": [1.0], ");
    let not_spd = write(d.path(), "n.json", r#"{"mean": [1.0], "cov": [[-1.0]]}"#);
    let two_d = write(
        d.path(),
        "t.json",
        r#"{"mean": [1.0, 2.0], "cov": [[1.0, 0.0], [0.0, 1.0]]}"#,
    );
    assert_eq!(code(&run(&["fuse", &good, &broken])), 2);
    assert_eq!(code(&run(&["fuse", &good, &not_spd])), 2);
    assert_eq!(code(&run(&["fuse", &good, &two_d])), 2);
    assert_eq!(code(&run(&["fuse", &good, &good, "--omega", "1.5"])), 2);
    assert_eq!(code(&run(&["fuse", &good, "missing.json"])), 2);
    assert_eq!(code(&run(&["nonsense"])), 2);
    let cfg = write(d.path(), "c.cfg", "duration_s = 10\n");
    assert_eq!(code(&run(&["simulate", "--config", &cfg])), 2);
    let zero = scenario1_variant(
        d.path(),
        "z.cfg",
        &[("p0_sigma = [100.0, 10.0]", "p0_sigma = [0.0, 0.0]")],
    );
    assert_eq!(
        code(&run(&["simulate", "--config", &zero, "--runs", "1"])),
        2
    );
}

#[test]
fn invalid_mixture_pair_exits_3() {
    let d = TempDir::new().unwrap();
    let m = write(
        d.path(),
        "m.json",
        r#"{"weights": [0.01, 0.99], "components": [{"mean": [0.0], "cov": [[100.0]]}, {"mean": [0.0], "cov": [[0.01]]}]}"#,
    );
    let o = run(&["fuse", &m, &m, "--strategy", "hmd"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn all_runs_diverged_exits_4() {
    // noiseless tracker started on the truth: its one-step prediction lands
    // on the first sensor, where the measurement Jacobian is singular
    let d = TempDir::new().unwrap();
    let cfg = scenario1_variant(
        d.path(),
        "bad.cfg",
        &[
            ("p0_sigma = [100.0, 10.0]", "p0_sigma = [1e-12, 1e-12]"),
            (
                "kind = \"ncv\"\nq = [0.5, 0.5, 0.001]",
                "kind = \"ncv\"\nq = [0.0, 0.0, 0.0]",
            ),
            (
                "position = [2000.0, 9000.0, 0.0]",
                "position = [200.0, 120.0, 0.0]",
            ),
        ],
    );
    let csv = d.path().join("o.csv");
    let o = run(&[
        "simulate",
        "--config",
        &cfg,
        "--runs",
        "2",
        "--out-csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 4);
}

#[test]
fn simulate_writes_reproducible_outputs() {
    let d = TempDir::new().unwrap();
    let cfg = configs().join("scenario1.cfg");
    let go = |tag: &str| {
        let csv = d.path().join(format!("{tag}.csv"));
        let json = d.path().join(format!("{tag}.json"));
        let o = run(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--runs",
            "5",
            "--seed",
            "7",
            "--out-csv",
            csv.to_str().unwrap(),
            "--out-json",
            json.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        (std::fs::read(csv).unwrap(), std::fs::read(json).unwrap())
    };
    let (c1, j1) = go("one");
    let (c2, j2) = go("two");
    assert_eq!(c1, c2);
    assert_eq!(j1, j2);
    let text = String::from_utf8(c1).unwrap();
    assert!(text.starts_with("step,time_s,strategy,rmse_pos_m,rmse_vel_mps,nees,nees_lo,nees_hi\n"));
    let v: serde_json::Value = serde_json::from_slice(&j1).unwrap();
    assert_eq!(v["runs"], 5);
    assert_eq!(v["seed"], 7);
}

#[test]
fn simulate_strategy_override() {
    let cfg = configs().join("scenario2.cfg");
    let o = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--runs",
        "2",
        "--strategy",
        "amd",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = String::from_utf8(o.stdout).unwrap();
    assert_eq!(csv.lines().count(), 1 + 300);
    assert!(csv
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(2) == Some("amd")));
    let bad = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--strategy",
        "bogus",
    ]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn bench_rows() {
    let d = TempDir::new().unwrap();
    let out = d.path().join("b.csv");
    let o = run(&[
        "bench",
        "--pairs",
        "4",
        "--reps",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(out).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "case,strategy,dim,components,calls,mean_us"
    );
    assert_eq!(text.lines().count(), 25);
    assert!(String::from_utf8_lossy(&o.stderr).contains("hmd/gmd"));
}

#[test]
fn validate_passes_and_catches_broken_division() {
    let o = run(&["validate", "--trials", "10"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 8);
    assert!(text.lines().all(|l| l.contains(" PASS ")));
    let broken = run(&["validate", "--trials", "10", "--inject-broken-division"]);
    assert_eq!(code(&broken), 5);
    assert!(String::from_utf8_lossy(&broken.stdout).contains("FAIL"));
}

#[test]
fn help_exits_0() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["simulate", "--help"])), 0);
}
