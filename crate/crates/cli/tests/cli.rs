use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn shadekit(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shadekit"))
        .arg("--artifacts")
        .arg(root)
        .args(args)
        .env_remove("SHADEKIT_ARTIFACTS")
        .env_remove("SHADEKIT_PORT")
        .output()
        .expect("spawn shadekit")
}

fn ok_json(out: Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn err_json(out: Output) -> Value {
    assert!(!out.status.success());
    serde_json::from_slice(&out.stderr).expect("stderr is JSON")
}

#[test]
fn score_prints_leed_points() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok_json(shadekit(dir.path(), &["score", "--sda", "56", "--ase", "10"]));
    assert_eq!(v["points"], 2);
    let v = ok_json(shadekit(dir.path(), &["score", "--sda", "97", "--ase", "34"]));
    assert_eq!(v["points"], 0);
    assert_eq!(v["ase_gate_met"], false);
}

#[test]
fn out_of_range_score_is_a_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let e = err_json(shadekit(dir.path(), &["score", "--sda", "120", "--ase", "0"]));
    assert_eq!(e["error"], "domain");
}

#[test]
fn unknown_family_is_rejected_by_the_parser() {
    let dir = tempfile::tempdir().unwrap();
    let out = shadekit(dir.path(), &["generate", "--family", "awning"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn generate_train_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let g = ok_json(shadekit(root, &["generate", "--family", "no_shading", "--parallelism", "2"]));
    assert_eq!(g[0]["rows"], 648);
    assert!(root.join("data/no_shading.csv").exists());

    let t = ok_json(shadekit(root, &["train", "--family", "no_shading", "--n-estimators", "10"]));
    assert_eq!(t.as_array().unwrap().len(), 6);
    assert!(root.join("models/no_shading/sda.json").exists());

    let args = [
        "predict", "--family", "no_shading", "--param", "width_x=6", "--param", "length_y=7", "--param", "win_side=S",
        "--param", "obs_angle=0", "--param", "wwr=30", "--param", "win_sill=0.8", "--param", "win_height=1.6",
        "--param", "win_num=1", "--param", "glass_vt=80",
    ];
    let p = ok_json(shadekit(root, &args));
    let sda = p["metrics"]["sda"].as_f64().unwrap();
    assert!((0.0..=100.0).contains(&sda));
    assert!(p["stars"].as_object().unwrap().values().all(|s| s == false));

    let e = err_json(shadekit(root, &["suggest", "--max-results", "3"]));
    assert_eq!(e["error"], "missing_artifact");
}

#[test]
fn optimize_refuses_missing_models() {
    let dir = tempfile::tempdir().unwrap();
    let e = err_json(shadekit(dir.path(), &["optimize", "--family", "fins", "--profile", "smoke"]));
    assert_eq!(e["error"], "missing_artifact");
}
