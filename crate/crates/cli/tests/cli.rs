use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn maps() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../maps")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_circdyn")).args(args).output().expect("spawn circdyn")
}

fn map(name: &str) -> String {
    maps().join(name).display().to_string()
}

fn path(dir: &Path) -> &str {
    dir.to_str().unwrap()
}

#[test]
fn analyze_accepts_an_invariant_partition() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["analyze", "--map", &map("doubling.json"), "--points", "0,1/2", "--depth", "6", "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let file: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("analyze.json")).unwrap()).unwrap();
    assert_eq!(report, file);
}

#[test]
fn analyze_rejects_a_non_invariant_partition() {
    let out = run(&["analyze", "--map", &map("doubling.json"), "--points", "0,1/3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&["analyze", "--map", &map("doubling.json")]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn malformed_specs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"type":"power","degree":2,"reversing":false,"colour":"red"}"#).unwrap();
    let out = run(&["analyze", "--map", bad.to_str().unwrap(), "--points", "0,1/2"]);
    assert_eq!(out.status.code(), Some(2));
    let missing = run(&["analyze", "--map", "/nonexistent/map.json", "--points", "0"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn render_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let render = |name: &str, seed: &str| {
        let file = dir.path().join(name);
        let out = run(&[
            "render", "--map", &map("pine_tree.json"), "--size", "96", "--samples", "20000", "--seed", seed, "--out",
            file.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(file).unwrap()
    };
    let a = render("a.ppm", "3");
    assert!(a.starts_with(b"P6\n96 96\n255\n"));
    assert_eq!(a, render("b.ppm", "3"));
    assert_ne!(a, render("c.ppm", "4"));
}

#[test]
fn conjugate_writes_a_reproducible_profile() {
    let run_once = |dir: &Path| {
        let out = run(&[
            "conjugate", "--source", &map("doubling.json"), "--source-points", "0,1/2", "--target", &map("blaschke_b2.json"),
            "--target-points", "0,1/2", "--tgrid", "4..8", "--samples", "32", "--grid", "8", "--out", path(dir),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read_to_string(dir.join("profile.csv")).unwrap()
    };
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let csv = run_once(d1.path());
    assert!(csv.starts_with("j,t,rho_max,argmax_angle,class_running"));
    assert_eq!(csv.lines().count(), 1 + 5);
    assert_eq!(csv, run_once(d2.path()));
    for name in ["conjugate.json", "profile.ppm", "grid.csv"] {
        assert!(d1.path().join(name).exists(), "{name} missing");
    }
}

#[test]
fn orbit_rate_reports_the_parabolic_exponent() {
    let out = run(&[
        "orbit-rate", "--map", &map("parabolic_quadratic.json"), "--fixed", "0,0", "--start", "-0.1,0", "--range", "100..2000",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let exponent = v["exponent"].as_f64().unwrap();
    assert!((exponent + 1.0).abs() < 0.1, "{v}");
    assert_eq!(v["non_parabolic"], false);
}
