use std::path::Path;
use std::process::{Command, Output};

use reflecting_flights::cli::ExperimentConfig;

fn rflight(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rflight"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn configs() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(format!("{run}.csv"));
        let status = rflight(&[
            "simulate",
            "--d",
            "3",
            "--t",
            "2",
            "--lambda",
            "1.5",
            "--radius",
            "1",
            "--samples",
            "3000",
            "--seed",
            "11",
            "--workers",
            "3",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(
            status.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&status.stderr)
        );
        let hist = dir.path().join(format!("{run}_hist.csv"));
        outputs.push((std::fs::read(&out).unwrap(), std::fs::read(&hist).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs[0].0.clone()).unwrap();
    assert_eq!(text.lines().count(), 3001);
}

#[test]
fn uniform_density_config_is_constant() {
    let out = rflight(&[
        "density",
        "--config",
        configs().join("uniform_d3_n1.cfg").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("r,density,cartesian,cdf"));
    let values: Vec<f64> = lines
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 100);
    let want = 3.0 / (4.0 * std::f64::consts::PI);
    assert!(values.iter().all(|v| (v - want).abs() < 1e-12));
}

#[test]
fn moments_json_has_matching_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.json");
    let status = rflight(&[
        "moments",
        "--config",
        configs().join("moments_d3_n2.cfg").to_str().unwrap(),
        "--format",
        "json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(status.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out).unwrap()).unwrap();
    let rows = v["moments"].as_array().expect("moments array");
    assert!(!rows.is_empty());
    for row in rows {
        if let Some(closed) = row["closed_form"].as_f64() {
            let quad = row["quadrature"].as_f64().unwrap();
            assert!((closed - quad).abs() < 1e-8);
        }
    }
}

#[test]
fn validate_passes_and_fails_with_codes() {
    let ok = rflight(&[
        "validate",
        "--d",
        "2",
        "--t",
        "2",
        "--n",
        "2",
        "--radius",
        "1",
        "--samples",
        "20000",
    ]);
    assert_eq!(
        ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    let strict = rflight(&[
        "validate",
        "--d",
        "2",
        "--t",
        "2",
        "--n",
        "2",
        "--radius",
        "1",
        "--samples",
        "2000",
        "--set",
        "ks_tolerance=1e-9",
    ]);
    assert_eq!(strict.status.code(), Some(4));
}

#[test]
fn error_exit_codes() {
    let bad_h = rflight(&["density", "--d", "3", "--h", "3", "--n", "1"]);
    assert_eq!(bad_h.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_h.stderr).contains("h = 3"));

    let unknown = rflight(&["density", "--set", "colour=blue"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("colour"));

    let huge = rflight(&[
        "simulate",
        "--d",
        "2",
        "--lambda",
        "1000000",
        "--samples",
        "10",
    ]);
    assert_eq!(huge.status.code(), Some(3));
}

#[test]
fn print_config_round_trips() {
    let out = rflight(&[
        "epd-check",
        "--config",
        configs().join("epd_sphere_d3.cfg").to_str().unwrap(),
        "--print-config",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = ExperimentConfig::parse(&text).unwrap();
    assert_eq!(
        cfg,
        ExperimentConfig::load(&configs().join("epd_sphere_d3.cfg")).unwrap()
    );
}

#[test]
fn every_checked_in_config_loads() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::load(&path).unwrap();
        cfg.validate().unwrap();
    }
}
