use std::path::Path;
use std::process::{Command, Output};

use clap::Parser;
use meyers_cli::RunConfig;

fn meyers(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meyers"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn error_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).expect("stderr is a JSON error report")
}

fn csv_rows(bytes: &[u8]) -> Vec<Vec<f64>> {
    let mut r = csv::Reader::from_reader(bytes);
    r.records()
        .map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap_or(f64::NAN)).collect())
        .collect()
}

#[test]
fn config_round_trips_through_json() {
    let cases: [&[&str]; 5] = [
        &["meyers", "solve", "--mu", "0.5", "--rhs", "const:1,-2.5", "--bc", "oracle", "--refine", "2"],
        &["meyers", "--seed", "7", "scan-meyers", "--field", "identity", "--p-max", "6"],
        &["meyers", "threshold", "--mu", "0.25", "--mode", "holder", "--source", "fem", "--json"],
        &["meyers", "convergence", "--case", "oracle", "--levels", "2"],
        &["meyers", "reproduce", "--out-dir", "/tmp/x"],
    ];
    for args in cases {
        let cfg = RunConfig::try_parse_from(args).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back, "{text}");
    }
}

#[test]
fn identity_zero_problem_has_zero_solution() {
    let out = meyers(&["solve", "--field", "identity", "--rhs", "zero", "--bc", "zero"]);
    assert!(out.status.success());
    let rows = csv_rows(&out.stdout);
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.len() == 3 && r[2] == 0.0));
}

#[test]
fn lp_threshold_json() {
    let out = meyers(&["threshold", "--mu", "0.5", "--mode", "lp", "--json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["p_star"].as_f64().unwrap() - 4.0).abs() <= 0.4);
}

#[test]
fn weak_residuals_decrease() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("res.csv");
    let out = meyers(&["verify-oracle", "--mu", "0.5", "--levels", "3", "--csv", path.to_str().unwrap()]);
    assert!(out.status.success());
    let rows = csv_rows(&std::fs::read(&path).unwrap());
    assert_eq!(rows.len(), 4);
    assert!(rows.windows(2).all(|w| w[1][2] < w[0][2]));
}

#[test]
fn validation_errors_exit_2_with_json() {
    for args in [
        &["solve", "--field", "identity", "--bc", "oracle"][..],
        &["solve", "--mu", "1.5"],
        &["solve", "--mu", "0.5", "--field", "identity"],
        &["solve", "--mu", "0.5", "--quad", "4"],
        &["scan-meyers", "--mu", "0.5", "--refine", "0"],
        &["bmo", "--mu", "0.5", "--quad", "32"],
    ] {
        let out = meyers(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let e = error_json(&out);
        assert_eq!(e["code"], "validation");
        assert!(e["message"].is_string() && e.get("context").is_some());
    }
}

#[test]
fn solver_failure_exits_3() {
    let out = meyers(&["solve", "--mu", "0.5", "--rhs", "manufactured", "--max-iter", "3"]);
    assert_eq!(out.status.code(), Some(3));
    let e = error_json(&out);
    assert_eq!(e["code"], "no-convergence");
    assert_eq!(e["context"]["iterations"], 3);
}

#[test]
fn artifacts_are_write_once() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.csv");
    std::fs::write(&path, "keep").unwrap();
    let out = meyers(&["solve", "--field", "identity", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(std::fs::read_to_string(&path).unwrap(), "keep");
}

#[test]
fn unwritable_out_dir_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let target = blocker.join("sub");
    let out = meyers(&["reproduce", "--out-dir", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["code"], "io");
    assert!(!Path::new(&target).exists());
}

#[test]
fn bad_thread_count_exits_2() {
    let out = Command::new(env!("CARGO_BIN_EXE_meyers"))
        .args(["bmo", "--mu", "0.5"])
        .env("MEYERS_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scan_csv_has_one_row_per_exponent() {
    let out = meyers(&["scan-meyers", "--field", "identity", "--refine", "1", "--p-max", "4", "--p-step", "1"]);
    assert!(out.status.success());
    let rows = csv_rows(&out.stdout);
    assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), vec![2.0, 3.0, 4.0]);
    assert!(rows.iter().all(|r| r[1].is_finite() && r[1] > 0.0));
}

#[test]
fn mesh_output_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("mesh.txt");
    let out = meyers(&["solve", "--field", "identity", "--refine", "1", "--mesh-out", mesh.to_str().unwrap()]);
    assert!(out.status.success());
    let file = std::io::BufReader::new(std::fs::File::open(&mesh).unwrap());
    let m = meyers_core::MeshTri::read_ascii(file).unwrap();
    assert_eq!(m.n_vertices(), csv_rows(&out.stdout).len());
}
