use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robust-sparse")).args(args).output().unwrap()
}

fn write_config(dir: &Path) -> String {
    let config = serde_json::json!({
        "base": {
            "model": {"kind": "mean"},
            "n": 120, "d": 8, "s": 2, "epsilon": 0.1,
            "q_family": {"family": "point_mass", "shift": [6, 0, 0, 0, 0, 0, 0, 0]},
            "trials": 2, "seed": 3, "max_oracle_calls": 30
        },
        "grid": [{"epsilon": 0.05}, {"epsilon": 0.15}]
    });
    let path = dir.join("sweep.json");
    fs::write(&path, config.to_string()).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn sweep_writes_one_row_per_run_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = |name: &str, threads: &str| {
        let path = dir.path().join(name);
        let o = run(&["sweep", "--config", &config, "--out", path.to_str().unwrap(), "--threads", threads]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read_to_string(path).unwrap()
    };
    let a = out("a.csv", "1");
    assert_eq!(a, out("b.csv", "2"));
    // header + 2 grid points × 2 trials × 2 default methods
    assert_eq!(a.lines().count(), 9);
    assert!(a.starts_with("grid_point,trial,method,"));
}

#[test]
fn simulate_then_estimate_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    fs::write(
        &config,
        r#"{"model": {"kind": "mean"}, "n": 80, "d": 6, "s": 1, "epsilon": 0.1,
            "q_family": {"family": "point_mass", "shift": [5, 0, 0, 0, 0, 0]}, "max_oracle_calls": 30}"#,
    )
    .unwrap();
    let data = dir.path().join("data.csv");
    let cfg = config.to_str().unwrap();
    let o = run(&["simulate", "--config", cfg, "--out", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["estimate", "--config", cfg, "--data", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["theta_hat"].as_array().unwrap().len(), 6);
    assert!(summary["oracle_calls"].as_u64().unwrap() >= 1);
}

#[test]
fn bad_input_fails_cleanly() {
    assert_eq!(run(&["verify", "--suite", "nope"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    fs::write(&config, r#"{"model": {"kind": "mean"}, "n": 10}"#).unwrap();
    let o = run(&["estimate", "--config", config.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(!o.stderr.is_empty());
}

#[test]
fn verify_lemmas_passes() {
    let o = run(&["verify", "--suite", "lemmas", "--json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report.is_object() || report.is_array());
}
