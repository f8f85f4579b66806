//! The `degenlab` binary: exit codes, report layout, determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use degenlab_cli::RunManifest;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn degenlab(cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_degenlab"))
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .args(["--no-cache", "--threads", "2"])
        .args(extra)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

#[test]
fn passing_run_exits_zero_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = degenlab(&config("forward-constant.json"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("[PASS] forward-constant/max_reference_error"), "{stdout}");

    let m: RunManifest = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert!(m.passed);
    assert_eq!(m.suite, "forward-constant");
    assert!(!m.config_digest.is_empty());
    for a in &m.artifacts {
        let path = dir.path().join(&a.path);
        let (sha, bytes) = degenlab_cli::manifest::file_digest(&path).unwrap();
        assert_eq!((sha, bytes), (a.sha256.clone(), a.bytes), "{}", a.path.display());
    }
    assert!(m.artifacts.iter().any(|a| a.path.ends_with("solution.csv")));
}

#[test]
fn identical_potentials_give_zero_residual() {
    let dir = tempfile::tempdir().unwrap();
    let out = degenlab(&config("alessandrini-identical.json"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn runtime_failure_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = degenlab(&config("cgo-unresolved.json"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}

#[test]
fn invalid_config_exits_two_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"command": "forward", "mesh": {"lengths": [1.0, 1.0], "cells": [0, 8]}, "weight": {"s": 0.5, "mode": "Vertical"}}"#).unwrap();
    let out = degenlab(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mesh"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn failed_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("strict.json");
    let text = std::fs::read_to_string(config("forward-constant.json")).unwrap().replace("1e-10", "-1.0");
    std::fs::write(&cfg, text).unwrap();
    let out = degenlab(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("[FAIL]"));
}

#[test]
fn reports_are_reproducible() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/runge-small.json");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let out = degenlab(&cfg, d.path(), &["--seed", "17"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("runge-small/runge.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}
