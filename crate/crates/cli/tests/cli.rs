use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn aubry(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_aubry"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = aubry(args, &[]);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn error_record(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).unwrap_or_else(|| panic!("no JSON in {text}"));
    serde_json::from_str(line).unwrap()
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    let text = std::fs::read_to_string(path).unwrap();
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    csv::Reader::from_reader(body.as_bytes()).records().map(|r| r.unwrap()).collect()
}

fn f(r: &csv::StringRecord, k: usize) -> f64 {
    r[k].parse().unwrap()
}

#[test]
fn beta_scan_pendulum_writes_full_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&[
        "beta-scan", "--spec", "pendulum", "--set", "spec.eps=0.1", "--set", "beta.k_max=1", "--set", "beta.restarts=2",
        "--out", out,
    ]);
    let table = rows(&dir.path().join("beta_table.csv"));
    assert_eq!(table.len(), 33);
    assert!(table.iter().all(|r| &r[7] == "true"));
    // separable along h₁ = 0: the rest minimum plus the flat part
    for r in table.iter().filter(|r| f(r, 0) == 0.0) {
        let h2 = f(r, 1);
        assert!((f(r, 2) - (-0.1 + 0.5 * h2 * h2)).abs() < 1e-6, "{r:?}");
    }
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "beta-scan");
    assert_eq!(manifest["jobs"].as_array().unwrap().len(), 33);
}

#[test]
fn malformed_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.ini");
    std::fs::write(&cfg, "[beta]\nnodes = -4\n").unwrap();
    let out = aubry(&["beta-scan", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    let rec = error_record(&out);
    assert_eq!(rec["error"], "ConfigError");
    assert_eq!(rec["field"], "beta.nodes");

    std::fs::write(&cfg, "[beta\nnodes=4\n").unwrap();
    let out = aubry(&["beta-scan", "--config", cfg.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["error"], "ConfigError");
}

#[test]
fn environment_overrides_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = aubry(&["beta-scan", "--out", dir.path().to_str().unwrap()], &[("AUBRY_BETA_NODES", "-1")]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["field"], "beta.nodes");
    assert!(!dir.path().join("beta_table.csv").exists());
}

#[test]
fn job_cap_stops_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let out = aubry(&["beta-scan", "--set", "run.max_jobs=3", "--out", dir.path().to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_record(&out)["error"], "BudgetExceeded");
}

#[test]
fn unknown_plot_kind_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    std::fs::write(&input, "h1,h2,beta_env\n").unwrap();
    let out = aubry(&["plot", "--kind", "histogram", "--input", input.to_str().unwrap()], &[]);
    assert!(!out.status.success());
    assert_eq!(error_record(&out)["error"], "UnsupportedKind");
}

#[test]
fn report_manifest_lists_every_file() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["report", "--spec", "flat", "--out", dir.path().to_str().unwrap()]);
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    let listed: Vec<&str> = manifest["files"].as_array().unwrap().iter().map(|e| e["path"].as_str().unwrap()).collect();
    let mut on_disk: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != "manifest.json")
        .collect();
    on_disk.sort();
    assert_eq!(listed, on_disk);
    for name in ["verdict.json", "beta_table.csv", "subdiff.csv", "foliation.csv"] {
        assert!(listed.contains(&name), "{name}");
    }
    for e in manifest["files"].as_array().unwrap() {
        let bytes = std::fs::read(dir.path().join(e["path"].as_str().unwrap())).unwrap();
        assert_eq!(e["bytes"].as_u64().unwrap(), bytes.len() as u64);
    }
    let verdict: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("verdict.json")).unwrap()).unwrap();
    assert_eq!(verdict["verdict"], "consistent-with-C0-integrable");
}

#[test]
fn beta_ball_of_flat_is_a_circle() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let radii: Vec<String> = (2..=20).map(|k| format!("{}", 0.05 * k as f64)).collect();
    ok(&["beta-scan", "--spec", "flat", "--set", &format!("beta.radii={}", radii.join(",")), "--out", out]);
    let plot_dir = dir.path().join("plot");
    ok(&[
        "plot", "--kind", "beta-ball", "--input", dir.path().join("beta_table.csv").to_str().unwrap(), "--out",
        plot_dir.to_str().unwrap(),
    ]);
    let pts = rows(&plot_dir.join("beta-ball.csv"));
    assert_eq!(pts.len(), 8);
    for r in &pts {
        assert!((f(r, 0).hypot(f(r, 1)) - 0.5).abs() < 4e-3, "{r:?}");
    }
    let svg = std::fs::read_to_string(plot_dir.join("beta-ball.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
}

#[test]
fn corner_map_marks_the_pendulum() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&[
        "subdiff", "--spec", "pendulum", "--set", "spec.eps=0.3", "--set", "subdiff.norms=0.5", "--set", "beta.k_max=1",
        "--set", "beta.restarts=4", "--set", "beta.nodes=48", "--out", out,
    ]);
    let plot_dir = dir.path().join("plot");
    ok(&[
        "plot", "--kind", "corner-map", "--input", dir.path().join("subdiff.csv").to_str().unwrap(), "--out",
        plot_dir.to_str().unwrap(),
    ]);
    let map = rows(&plot_dir.join("corner-map.csv"));
    assert_eq!(map.len(), 8);
    let marked: Vec<_> = map.iter().filter(|r| &r[3] == "true").collect();
    assert!(!marked.is_empty());
    // h = (0, ½) sits on the separatrix corner
    assert!(marked.iter().any(|r| f(r, 0) == 0.0 && f(r, 1) == 0.5));
}

#[test]
fn fiber_cloud_of_flat_is_the_identity() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&[
        "foliation", "--spec", "flat", "--set", "foliation.c_n=3", "--set", "foliation.fibers=2", "--out", out,
    ]);
    let fol = rows(&dir.path().join("foliation.csv"));
    assert_eq!(fol.len(), 18);
    for r in &fol {
        assert!((f(r, 2) - f(r, 4)).abs() < 1e-6 && (f(r, 3) - f(r, 5)).abs() < 1e-6, "{r:?}");
    }
    let plot_dir = dir.path().join("plot");
    ok(&[
        "plot", "--kind", "fiber-cloud", "--input", dir.path().join("foliation.csv").to_str().unwrap(), "--out",
        plot_dir.to_str().unwrap(),
    ]);
    assert_eq!(rows(&plot_dir.join("fiber-cloud.csv")).len(), 18);
}

#[test]
fn u_surface_draws_contours() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&[
        "weakkam", "--spec", "pendulum", "--set", "spec.eps=0.1", "--set", "weakkam.c_n=1", "--set", "weakkam.m=32",
        "--out", out,
    ]);
    let summary = rows(&dir.path().join("weakkam.csv"));
    assert_eq!(summary.len(), 1);
    let plot_dir = dir.path().join("plot");
    ok(&[
        "plot", "--kind", "u-surface", "--input", dir.path().join("u_000.csv").to_str().unwrap(), "--out",
        plot_dir.to_str().unwrap(),
    ]);
    assert!(rows(&plot_dir.join("u-surface.csv")).len() > 8);
}
