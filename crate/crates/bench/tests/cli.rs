mod common;

use std::path::Path;
use std::process::{Command, Output};

use dyadshift_bench::Suite;
use serde_json::{json, Value};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dyadshift")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, v: &Value) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, v.to_string()).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn list_suites_names_every_suite() {
    let out = bin(&["list-suites"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for s in Suite::ALL {
        assert!(text.contains(s.name()), "missing {}", s.name());
    }
}

#[test]
fn validate_accepts_and_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(dir.path(), &common::small_json(Suite::Stopping51, 1));
    assert_eq!(bin(&["validate", "--config", &good]).status.code(), Some(0));

    let bad = write_config(dir.path(), &json!({"suite": "stopping-51", "seed": 1, "trials": 0}));
    assert_eq!(bin(&["validate", "--config", &bad]).status.code(), Some(2));
}

#[test]
fn run_writes_table_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(
        dir.path(),
        &json!({"suite": "identity-318", "seed": 7, "levels": [3], "depths": [[0, 1, 2, 0]], "trials": 2}),
    );
    let run = bin(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert!(stdout.contains("PASS"));

    let csv = std::fs::read_to_string(out.join("identity-318.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(header, "i1,i2,j1,j2,L,seed,max_abs_dev,pass");
    assert_eq!(csv.lines().count(), 2);
    assert!(out.join("identity-318.summary.json").is_file());
    assert!(out.join("identity-318.timing.json").is_file());
}

#[test]
fn depth_overflow_exits_two_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), &json!({"suite": "identity-318", "seed": 7, "levels": [3], "depths": [[3, 0, 0, 0]]}));
    let run = bin(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn failing_criterion_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(
        dir.path(),
        &json!({"suite": "l2-contraction", "seed": 7, "levels": [3], "depths": [[0, 0]], "trials": 2,
                "thresholds": {"bound": 0.1}}),
    );
    let run = bin(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8(run.stdout).unwrap().contains("FAIL"));
}

#[test]
fn unknown_suite_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &json!({"seed": 7}));
    assert_eq!(bin(&["validate", "--config", &cfg, "--suite", "no-such-suite"]).status.code(), Some(2));
    assert_eq!(bin(&["run", "--config", &cfg]).status.code(), Some(2));
}
