//! Binary-level checks: data validation errors and exit codes, config
//! rejection, and simulate/fit round trips.

use std::path::Path;
use std::process::{Command, Output};

fn brbvs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brbvs")).args(args).output().expect("binary runs")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

const HEADER: &str = "t1_lower,t1_upper,t2_lower,t2_upper,cens1,cens2,x1\n";

#[test]
fn simulate_is_deterministic_and_reloadable() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        let r = brbvs(&["simulate", "--n", "80", "--p", "3", "--seed", "11", "--out", out.to_str().unwrap()]);
        assert!(r.status.success());
    }
    let da = std::fs::read(a.join("dataset.csv")).unwrap();
    let db = std::fs::read(b.join("dataset.csv")).unwrap();
    assert_eq!(da, db);

    // the generated file loads back through the fit path
    let cfg = tmp.path().join("cfg.json");
    write(
        &cfg,
        r#"{"model": {"copula": "N", "margins": ["PH", "PH"], "eta1": {"linear": ["x1"]}, "eta2": {"linear": ["x2"]}}}"#,
    );
    let r = brbvs(&[
        "fit",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        a.join("dataset.csv").to_str().unwrap(),
        "--out",
        tmp.path().join("fit").to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(tmp.path().join("fit/fit.json").exists());
}

#[test]
fn bad_status_row_reports_line_and_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("bad.csv");
    // row 3: interval with lower == upper is invalid
    write(
        &data,
        &format!("{}1.0,1.0,2.0,2.0,U,U,0.5\n1.5,1.5,0.7,0.7,I,U,0.1\n", HEADER),
    );
    let r = brbvs(&["select", "--data", data.to_str().unwrap(), "--metric", "CE"]);
    assert_eq!(r.status.code(), Some(3));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("row 3"), "stderr: {}", err);
}

#[test]
fn unknown_config_key_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    write(&cfg, r#"{"seeed": 4}"#);
    let r = brbvs(&["simulate", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn missing_required_column_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("nocol.csv");
    write(&data, "t1_lower,t1_upper,t2_lower,t2_upper,cens1,x1\n1,1,1,1,U,0.3\n");
    let r = brbvs(&["select", "--data", data.to_str().unwrap(), "--metric", "CE"]);
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&r.stderr).contains("cens2"));
}

#[test]
fn categorical_expansion_reference_codes_alphabetically() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("cat.csv");
    let mut body = String::from("t1_lower,t1_upper,t2_lower,t2_upper,cens1,cens2,arm\n");
    for i in 0..60 {
        let level = ["a", "b", "c"][i % 3];
        body.push_str(&format!("{0}.0,{0}.0,{1}.0,{1}.0,U,U,{2}\n", 1 + i % 4, 2 + i % 3, level));
    }
    write(&data, &body);
    let cfg = tmp.path().join("cfg.json");
    write(
        &cfg,
        r#"{"categorical": ["arm"], "model": {"copula": "N", "margins": ["PH", "PH"], "eta1": {"linear": ["arm_b", "arm_c"]}, "eta2": {"linear": []}}}"#,
    );
    let out = tmp.path().join("fit");
    let r = brbvs(&[
        "fit",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let report = std::fs::read_to_string(out.join("fit.json")).unwrap();
    // level "a" is the reference: only b and c indicators exist
    assert!(report.contains("arm_b") && report.contains("arm_c"));
    assert!(!report.contains("arm_a"));
}

#[test]
fn cens_column_is_ignored() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("extra.csv");
    let mut body = String::from("t1_lower,t1_upper,t2_lower,t2_upper,cens1,cens2,cens,x1\n");
    for i in 0..80 {
        let (t1, t2) = (0.5 + 0.031 * i as f64, 0.4 + 0.017 * ((i * 7) % 80) as f64);
        body.push_str(&format!("{0},{0},{1},{1},U,U,whatever,{2}\n", t1, t2, i as f64 / 80.0));
    }
    write(&data, &body);
    let r = brbvs(&["select", "--data", data.to_str().unwrap(), "--metric", "CE", "--kmax", "1", "--B", "2", "--m", "60"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
}
