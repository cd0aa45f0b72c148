//! The binary's subcommands, exit codes and artifacts.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bubble-lab"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .env("BUBBLE_LAB_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_annulus(dir: &Path) -> String {
    let path = dir.join("annulus.json");
    fs::write(&path, r#"{"shape":"annulus","center":[3,0,0,0],"radii":[1,2],"n":4,"weight_exponents":[2]}"#).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn ground_state_writes_profile_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["ground-state", "--n", "4", "--p0", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("ground_state_n4_p3.csv")).unwrap();
    assert!(csv.starts_with("r,U,V\n"));
    let side: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ground_state_n4_p3.json")).unwrap()).unwrap();
    assert_eq!(side["meta"]["seed"], 0);
    assert!((side["profile"]["tail_a"].as_f64().unwrap() - 8.0).abs() < 1e-4);
}

#[test]
fn reduce_places_two_bubbles_on_the_axis() {
    let dir = tempfile::tempdir().unwrap();
    let domain = write_annulus(dir.path());
    let out = run(dir.path(), &["reduce", "--domain", &domain, "--kappa", "2", "--epsilon", "0.01"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = stdout_json(&out);
    for key in ["epsilon", "xi_list", "Lambda_star", "t_star", "delta_pred", "J_model", "margin", "seed"] {
        assert!(!doc[key].is_null(), "missing {key}");
    }
    let xs: Vec<f64> = doc["xi_list"].as_array().unwrap().iter().map(|x| x[0].as_f64().unwrap()).collect();
    assert_eq!(xs.len(), 2);
    assert!((xs[0] - 1.0).abs() < 1e-9 && (xs[1] - 4.0).abs() < 1e-9);
    let saved: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("reduce_annulus_k2.json")).unwrap()).unwrap();
    assert_eq!(saved, doc);
}

#[test]
fn residual_sweep_csv_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["residual-sweep", "--regime", "slow", "--n", "5", "--p0", "1.4"];
    assert_eq!(run(a.path(), &args).status.code(), Some(0));
    assert_eq!(run(b.path(), &args).status.code(), Some(0));
    let name = "residual_sweep_slow_n5_p1.4.csv";
    let body = fs::read(a.path().join(name)).unwrap();
    assert_eq!(body, fs::read(b.path().join(name)).unwrap());
    let text = String::from_utf8(body).unwrap();
    assert!(text.starts_with("component,epsilon,delta,eta,measured_norm,predicted_exponent,fitted_slope\n"));
    assert_eq!(text.lines().count(), 1 + 2 * 17);
    let side: Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("residual_sweep_slow_n5_p1.4.json")).unwrap()).unwrap();
    assert!(side["relative_gap_u"].as_f64().unwrap() <= 0.05);
    assert!(side["relative_gap_v"].as_f64().unwrap() <= 0.05);
}

#[test]
fn json_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let tail = stdout_json(&run(dir.path(), &["tail", "--n", "5", "--p0", "1.4"]));
    assert_eq!(tail["regime"], "slow");
    assert!(tail["slow_identity_gap"].as_f64().unwrap() <= 0.02);
    let kernel = stdout_json(&run(dir.path(), &["kernel-check", "--n", "4", "--p0", "3"]));
    assert!(kernel["max_residual"].as_f64().unwrap() <= 1e-6);
    let dims: Vec<i64> = kernel["modes"].as_array().unwrap().iter().map(|m| m["dimension"].as_i64().unwrap()).collect();
    assert_eq!(dims, [1, 1, 0]);
    let constants = stdout_json(&run(dir.path(), &["constants", "--n", "5", "--p0", "1.4"]));
    assert_eq!(constants["constants"]["B2_defined"], false);
    let green = stdout_json(&run(dir.path(), &["--seed", "5", "green-check", "--n", "3"]));
    assert_eq!(green["seed"], 5);
    assert!(green["symmetry"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn project_writes_ordered_targets() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["project", "--n", "4", "--p0", "3", "--epsilon", "0.05", "--monte-carlo", "20000"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("project_n4_p3_eps0.05.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")));
    let side: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("project_n4_p3_eps0.05.json")).unwrap()).unwrap();
    assert_eq!(side["all_ordered"], true);
    assert_eq!(side["monte_carlo_at_centre"]["seed"], 0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| run(dir.path(), args).status.code();
    assert_eq!(code(&["frobnicate"]), Some(2));
    assert_eq!(code(&["ground-state", "--n", "4"]), Some(2));
    assert_eq!(code(&["reduce", "--domain", "/nonexistent.json", "--kappa", "1", "--epsilon", "0.01"]), Some(2));
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{not json").unwrap();
    assert_eq!(code(&["reduce", "--domain", bad.to_str().unwrap(), "--kappa", "1", "--epsilon", "0.01"]), Some(2));
    assert_eq!(code(&["residual-sweep", "--regime", "fast", "--n", "5", "--p0", "1.4"]), Some(2));
    let domain = write_annulus(dir.path());
    assert_eq!(code(&["reduce", "--domain", &domain, "--kappa", "3", "--epsilon", "0.01"]), Some(1));
    assert_eq!(code(&["report", "--only", "11"]), Some(2));
}

#[test]
fn report_subset_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["report", "--only", "3,9,10"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 3);
}
