//! End-to-end runs of the binary over temp files.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_arfima"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("arfima_cli_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

const SPEC: &str = r#"{"p":0,"d":0.2,"q":1,"phi":[],"theta":[-0.3],"sigma2":1.0}"#;

#[test]
fn simulate_then_estimate_round_trip() {
    let csv = tmp("draws.csv");
    let status = bin()
        .args(["simulate", "--spec", SPEC, "--n", "256", "--seed", "5", "--reps", "2"])
        .arg("--out")
        .arg(&csv)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 256);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 2);

    let out = tmp("fit.json");
    let status = bin()
        .args(["estimate", "--method", "css", "--family", "0,0"])
        .arg("--in")
        .arg(&csv)
        .args(["--column", "1"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let d = fit["eta_hat"]["d"].as_f64().unwrap();
    assert!(d > -0.5 && d < 0.5);
    assert!(fit["converged"].as_bool().unwrap());
}

#[test]
fn pseudo_true_json_output() {
    let output = bin()
        .args(["pseudo-true", "--tdgp", SPEC, "--family", "0,0", "--tol", "1e-12"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let sol: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    let dstar = sol["d_star"].as_f64().unwrap();
    assert!((dstar - 0.1736).abs() < 1e-3, "dstar {dstar}");
}

#[test]
fn contour_emits_matrix_and_axes() {
    let stem = tmp("contour");
    let status = bin()
        .args(["contour", "--tdgp", SPEC, "--family", "1,0"])
        .args(["--d-steps", "8", "--beta-steps", "5"])
        .arg("--out")
        .arg(&stem)
        .status()
        .unwrap();
    assert!(status.success());
    let q = std::fs::read_to_string(format!("{}_q.csv", stem.display())).unwrap();
    assert_eq!(q.lines().count(), 8);
    assert_eq!(q.lines().next().unwrap().split(',').count(), 5);
    let d = std::fs::read_to_string(format!("{}_d.csv", stem.display())).unwrap();
    assert_eq!(d.lines().count(), 8);
}

#[test]
fn monte_carlo_and_asymptotic_dist() {
    let cfg = serde_json::json!({
        "pair": {"tdgp": serde_json::from_str::<serde_json::Value>(SPEC).unwrap(),
                  "family": {"p": 0, "q": 0}},
        "methods": ["fml", "css"],
        "n_list": [64],
        "replications": 20,
        "seed": 11,
    });
    let cfg_path = tmp("cfg.json");
    std::fs::write(&cfg_path, cfg.to_string()).unwrap();
    let out_dir = tmp("mc_out");
    let status = bin()
        .arg("monte-carlo")
        .arg("--config")
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out_dir.join("report.json").exists());
    assert!(out_dir.join("bias_mse.csv").exists());

    // case 3 law draws (no FML calibration run needed)
    let draws = tmp("law_draws.csv");
    let law = tmp("law.json");
    let pair = format!(
        r#"{{"tdgp": {SPEC}, "family": {{"p":0,"q":0}}}}"#
    );
    let status = bin()
        .args(["asymptotic-dist", "--pair", &pair, "--method", "fml"])
        .args(["--n", "128", "--samples", "500", "--seed", "3"])
        .arg("--out-draws")
        .arg(&draws)
        .arg("--out-law")
        .arg(&law)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(std::fs::read_to_string(&draws).unwrap().lines().count(), 500);
    let law: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&law).unwrap()).unwrap();
    assert_eq!(law["case"], "Three");
}
