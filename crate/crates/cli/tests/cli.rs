use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ncgeom::algebra::{diagonal_algebra, full_matrix_algebra, State};
use ncgeom::matrix::{self, MatrixJson};
use ncgeom::triple::SpectralTriple;
use serde_json::Value;
use tempfile::TempDir;

fn ncgeom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ncgeom"))
        .args(args)
        .env_remove("NCGEOM_TOL")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn write(dir: &Path, name: &str, v: &impl serde::Serialize) -> String {
    let p: PathBuf = dir.join(name);
    std::fs::write(&p, serde_json::to_string(v).unwrap()).unwrap();
    p.to_string_lossy().into_owned()
}

/// Two points at distance 1/m.
fn two_point(dir: &Path, m: f64) -> String {
    let d = matrix::from_real(2, 2, &[0.0, m, m, 0.0]);
    let g = matrix::diag_real(&[1.0, -1.0]);
    let t = SpectralTriple::new(diagonal_algebra(2).unwrap(), d, Some(g)).unwrap();
    write(dir, "triple.json", &t.to_json())
}

fn state(dir: &Path, name: &str, p: f64) -> String {
    let s = State::new(matrix::diag_real(&[p, 1.0 - p])).unwrap();
    write(dir, name, &s)
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&ncgeom(&["--help"])), 0);
    assert_eq!(code(&ncgeom(&["--version"])), 0);
}

#[test]
fn parse_errors_exit_one() {
    assert_eq!(code(&ncgeom(&["check", "--bogus"])), 1);
    assert_eq!(code(&ncgeom(&["experiment", "nope"])), 1);
    assert_eq!(code(&ncgeom(&[])), 1);
    let dir = TempDir::new().unwrap();
    let t = two_point(dir.path(), 1.0);
    assert_eq!(code(&ncgeom(&["check", "--triple", &t, "--tol", "-1"])), 1);
}

#[test]
fn malformed_json_reports_position() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, "{\n  \"algebra\": {\n    \"hilbert_dim\": 2,,\n}").unwrap();
    let o = ncgeom(&["check", "--triple", p.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3 column"), "{err}");
}

#[test]
fn check_passes_and_fails() {
    let dir = TempDir::new().unwrap();
    let t = two_point(dir.path(), 2.0);
    let o = ncgeom(&["check", "--triple", &t]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert_eq!(v["pass"], true);
    assert_eq!(v["schema_version"], "1.0");

    // Grading that commutes with D.
    let mut j = serde_json::from_str::<Value>(&std::fs::read_to_string(&t).unwrap()).unwrap();
    j["grading"] = serde_json::to_value(MatrixJson::from_matrix(&matrix::identity(2))).unwrap();
    let bad = write(dir.path(), "bad.json", &j);
    assert_eq!(code(&ncgeom(&["check", "--triple", &bad])), 2);
}

#[test]
fn two_point_distance() {
    let dir = TempDir::new().unwrap();
    let t = two_point(dir.path(), 2.0);
    let a = state(dir.path(), "a.json", 1.0);
    let b = state(dir.path(), "b.json", 0.0);
    let o = ncgeom(&["distance", "--triple", &t, "--state", &a, "--state", &b, "--tol", "1e-7"]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    let (lo, hi) = (v["lower"].as_f64().unwrap(), v["upper"].as_f64().unwrap());
    assert!(lo <= 0.5 + 1e-7 && hi >= 0.5 - 1e-7 && hi - lo <= 1e-6, "{v}");
    assert_eq!(v["status"], "certified");
    assert!(v["iterations"].is_u64());
}

#[test]
fn distance_matrix_csv_has_labels() {
    let dir = TempDir::new().unwrap();
    let t = two_point(dir.path(), 1.0);
    let a = state(dir.path(), "north.json", 1.0);
    let b = state(dir.path(), "south.json", 0.0);
    let c = state(dir.path(), "mid.json", 0.5);
    let o = ncgeom(&["distance", "--triple", &t, "--state", &a, "--state", &b, "--state", &c, "--even", "--format", "csv"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "state,north,south,mid");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').skip(1).map(|x| x.parse().unwrap()).collect())
        .collect();
    assert!((rows[0][1] - 1.0).abs() < 1e-6);
    assert!((rows[0][2] - 0.5).abs() < 1e-6);
    assert!((rows[2][1] - 0.5).abs() < 1e-6);
    assert!(rows[1][1].abs() < 1e-12);
}

#[test]
fn gauge_mor_emits_minus_d() {
    let dir = TempDir::new().unwrap();
    let alg = write(dir.path(), "m2.json", &full_matrix_algebra(2).unwrap().to_json());
    let sx = matrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let d = write(dir.path(), "d.json", &MatrixJson::from_matrix(&sx));
    let zero = write(dir.path(), "zero.json", &MatrixJson::from_matrix(&matrix::zeros(2, 2)));
    let o = ncgeom(&["gauge", "mor", "--D", &d, "--Dprime", &zero, "--algebra", &alg]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert_eq!(v["exists"], true);
    let omega: MatrixJson = serde_json::from_value(v["omega"].clone()).unwrap();
    let omega = omega.to_matrix().unwrap();
    assert!(matrix::hs_norm(&(&omega + &sx)) < 1e-12);

    let o = ncgeom(&["gauge", "mor", "--D", &zero, "--Dprime", &d, "--algebra", &alg]);
    assert_eq!(stdout_json(&o)["exists"], false);
    let o = ncgeom(&["gauge", "initial", "--D", &d, "--algebra", &alg]);
    assert_eq!(stdout_json(&o)["initial"], true);
    let o = ncgeom(&["gauge", "iso", "--D", &d, "--Dprime", &zero, "--algebra", &alg]);
    assert_eq!(stdout_json(&o)["isomorphism"], false);
}

#[test]
fn moyal_eigenstate_distance() {
    let o = ncgeom(&["moyal", "eig-dist", "--m", "0", "--n", "1", "--theta", "2", "--N", "12"]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert!((v["formula"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    let (lo, hi) = (v["lower"].as_f64().unwrap(), v["upper"].as_f64().unwrap());
    assert!(lo <= 1.0 + 1e-6 && hi >= 1.0 - 1e-6, "{v}");
}

#[test]
fn tolerance_from_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_ncgeom"))
        .args(["moyal", "eig-dist", "--m", "0", "--n", "1", "--N", "8"])
        .env("NCGEOM_TOL", "0")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn sweep_csv_columns() {
    let o = ncgeom(&["experiment", "gh", "--format", "csv"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "parameter,lower,upper,formula,residual,schema_version");
    assert_eq!(lines.len(), 5);
}

#[test]
fn eigdist_table_has_21_rows() {
    let o = ncgeom(&["experiment", "eigdist", "--theta", "1", "--N", "10", "--format", "csv"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 22);
}

#[test]
fn zeta_volume() {
    let o = ncgeom(&["experiment", "zeta", "--theta", "1"]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    let (est, err) = (v["volume_estimate"].as_f64().unwrap(), v["volume_error"].as_f64().unwrap());
    assert!((est - 2.0).abs() <= err.max(0.05), "{v}");
}

#[test]
fn category_suite_is_deterministic() {
    let a = ncgeom(&["experiment", "category", "--seed", "7", "--count", "5"]);
    let b = ncgeom(&["experiment", "category", "--seed", "7", "--count", "5"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stdout));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn report_written_to_file() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("r.json");
    let o = ncgeom(&["moyal", "correspondence", "--n", "2", "--N", "8", "--output", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(v["pass"], true);
    assert_eq!(v["schema_version"], "1.0");
}
