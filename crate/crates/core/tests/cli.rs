//! End-to-end tests of the `svqlab` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_svqlab"))
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_FREE: &str = r#"
scenario = "free_packet"
seed = 11
x_min = -12.0
x_max = 12.0
n_points = 128
steps = 40
dt = 0.02
trajectories = 4000
checkpoints = 3
"#;

#[test]
fn list_scenarios_names_all_five() {
    let out = bin().arg("list-scenarios").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["coherent_oscillator", "free_packet", "stationary_state", "entropy_demo", "field_ground"] {
        assert!(text.contains(name), "missing {name}");
    }
}

#[test]
fn validate_accepts_a_minimal_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ok.toml", "scenario = \"entropy_demo\"\nseed = 1\n");
    let out = bin().args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}

#[test]
fn missing_seed_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "scenario = \"free_packet\"\n");
    let out = bin().args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("seed"), "{}", stderr(&out));
}

#[test]
fn negative_nu_cites_positivity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "scenario = \"free_packet\"\nseed = 1\nnu = -0.5\n");
    let out = bin().args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("nu") && err.contains("positiv"), "{err}");
}

#[test]
fn kappa_constraint_violation_exits_2_on_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "scenario = \"free_packet\"\nseed = 1\nmass = 1.0\nkappa = 1.0\nalpha = 0.5\nnu = 0.7\n",
    );
    let out = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("constraint"), "{}", stderr(&out));
    assert!(!dir.path().join("o").join("report.json").exists());
}

#[test]
fn unreadable_and_malformed_configs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["validate", "--config"]).arg(dir.path().join("absent.toml")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let cfg = write(dir.path(), "bad.toml", "scenario = \n");
    let out = bin().args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let cfg = write(dir.path(), "extra.toml", "scenario = \"free_packet\"\nseed = 1\nbogus = 3\n");
    let out = bin().args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bogus"));
}

#[test]
fn json_config_runs_like_toml() {
    let dir = tempfile::tempdir().unwrap();
    let toml_cfg = write(dir.path(), "e.toml", "scenario = \"entropy_demo\"\nseed = 5\ncells = 6\n");
    let json_cfg = write(dir.path(), "e.json", r#"{"scenario": "entropy_demo", "seed": 5, "cells": 6}"#);
    for (cfg, out) in [(&toml_cfg, "a"), (&json_cfg, "b")] {
        let o = bin().args(["run", "--config"]).arg(cfg).arg("--out").arg(dir.path().join(out)).output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["entropy.v1.csv", "entropy_scan.v1.csv", "report.json"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
}

#[test]
fn outputs_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "free.toml", SMALL_FREE);
    let mut runs = Vec::new();
    for threads in ["1", "3", "1"] {
        let out = dir.path().join(format!("run{}", runs.len()));
        let o = bin()
            .env("RAYON_NUM_THREADS", threads)
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(matches!(o.status.code(), Some(0) | Some(1)), "{}", stderr(&o));
        runs.push(out);
    }
    for f in ["density.v1.csv", "charges.v1.csv", "report.json"] {
        let first = std::fs::read(runs[0].join(f)).unwrap();
        for r in &runs[1..] {
            assert_eq!(first, std::fs::read(r.join(f)).unwrap(), "{f} differs");
        }
    }
}

#[test]
fn failed_metric_exits_1_with_a_report() {
    let dir = tempfile::tempdir().unwrap();
    // far too few trajectories for the 0.05 density bound
    let cfg = write(dir.path(), "c.toml", &SMALL_FREE.replace("trajectories = 4000", "trajectories = 20"));
    let out = dir.path().join("o");
    let o = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], false);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL density_l1_forward"));
}
