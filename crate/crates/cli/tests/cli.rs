use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn pnsolve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pnsolve"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn small_slab(dir: &Path, alpha: f64) -> PathBuf {
    let text = format!(
        r#"{{
  "name": "slab",
  "model": {{"order": 3, "scattering": {{"kind": "isotropic", "sigma": 0.5}}}},
  "domain": {{"axes": ["x"], "lower": [-1.0], "upper": [1.0], "cells": [40]}},
  "boundaries": [{{"face": "x-", "alpha": {alpha}}}],
  "initial": {{"kind": "gaussian_bulk", "center": [0.0], "sigma": 0.2, "normalized": true}},
  "integration": {{"cfl": 0.5, "t_end": 0.5}},
  "outputs": {{"snapshots": [0.0, 0.5]}}
}}"#
    );
    let path = dir.join(format!("slab_{alpha}.json"));
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn verify_passes_on_clean_data() {
    let out = pnsolve(&["verify"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(!text.contains("FAIL"));
    assert!(text.contains("PASS golden A-hat row"));
}

#[test]
fn verify_reports_tampering() {
    let out = pnsolve(&["verify", "--tamper", "1e-3"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(2), "{text}");
    assert!(text.contains("FAIL golden A-hat row"));
}

#[test]
fn assemble_dumps_matrices() {
    let tmp = tempfile::tempdir().unwrap();
    let out = pnsolve(&["assemble", "2", "--out", tmp.path().to_str().unwrap()]);
    assert!(out.status.success());
    let a = std::fs::read_to_string(tmp.path().join("A_x.csv")).unwrap();
    assert_eq!(a.lines().count(), 9);
    assert_eq!(a.lines().next().unwrap().split(',').count(), 9);
    let l = std::fs::read_to_string(tmp.path().join("L_zhi.csv")).unwrap();
    assert_eq!(l.lines().count(), 3);
    assert!(tmp.path().join("basis.csv").exists());
}

#[test]
fn run_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_slab(tmp.path(), 1.0);
    let dir = tmp.path().join("run");
    let out = pnsolve(&["run", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "snapshot_0.csv",
        "snapshot_0.5.csv",
        "energy.csv",
        "metadata.json",
        "plot.py",
    ] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let snap = std::fs::read_to_string(dir.join("snapshot_0.5.csv")).unwrap();
    assert_eq!(snap.lines().next().unwrap(), "x,u00");
    assert_eq!(snap.lines().count(), 1 + 42);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["order"], 3);
    assert_eq!(meta["energy_bound"]["pass"], true);
    assert!(meta["faces"].as_array().unwrap().len() == 2);
}

#[test]
fn order_override_changes_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_slab(tmp.path(), 1.0);
    let dir = tmp.path().join("p5");
    let out = pnsolve(&[
        "run",
        cfg.to_str().unwrap(),
        "--order",
        "5",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["order"], 5);
    assert_eq!(meta["moments"], 36);
}

#[test]
fn oracle_writes_tallies_and_compares() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_slab(tmp.path(), 1.0);
    let run_dir = tmp.path().join("run");
    assert!(pnsolve(&[
        "run",
        cfg.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap()
    ])
    .status
    .success());
    let mc_dir = tmp.path().join("mc");
    let out = pnsolve(&[
        "oracle",
        cfg.to_str().unwrap(),
        "--n",
        "20000",
        "--seed",
        "5",
        "--out",
        mc_dir.to_str().unwrap(),
        "--compare",
        run_dir.to_str().unwrap(),
    ]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(text.contains("max |solver - MC|"));
    // scattering rules out the analytic reference
    assert!(!text.contains("analytic free streaming"));
    let tally = std::fs::read_to_string(mc_dir.join("mc_0.5.csv")).unwrap();
    assert_eq!(tally.lines().next().unwrap(), "x,u00,std_err");
    assert_eq!(tally.lines().count(), 1 + 40);
}

#[test]
fn oracle_reports_analytic_agreement_for_free_streaming() {
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(small_slab(tmp.path(), 1.0))
        .unwrap()
        .replace(
            r#"{"kind": "isotropic", "sigma": 0.5}"#,
            r#"{"kind": "none"}"#,
        );
    let cfg = tmp.path().join("free.json");
    std::fs::write(&cfg, text).unwrap();
    let out = pnsolve(&[
        "oracle",
        cfg.to_str().unwrap(),
        "--n",
        "200000",
        "--seed",
        "2",
        "--out",
        tmp.path().join("mc").to_str().unwrap(),
    ]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert_eq!(text.matches("analytic free streaming").count(), 2, "{text}");
    assert!(text.contains("label        0.5: analytic free streaming"));
}

#[test]
fn exit_codes() {
    assert_eq!(
        pnsolve(&["run", "/definitely/missing.json"]).status.code(),
        Some(3)
    );
    let tmp = tempfile::tempdir().unwrap();
    let bad = small_slab(tmp.path(), 1.5);
    assert_eq!(
        pnsolve(&["run", bad.to_str().unwrap()]).status.code(),
        Some(1)
    );
    let moment = scenario("tc2_stable.json");
    // moment profiles have no particle interpretation
    let out = pnsolve(&[
        "oracle",
        moment.to_str().unwrap(),
        "--n",
        "10",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}
