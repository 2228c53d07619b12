use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn vem_oc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vem-oc")).args(args).output().expect("run vem-oc")
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn rows(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let data = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    (header, data)
}

#[test]
fn lists_problems() {
    let out = vem_oc(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("example1") && text.contains("example2") && text.contains("lq"));
}

#[test]
fn unknown_problem_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = vem_oc(&["solve", "--problem", "nosuch", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("nosuch") && err.contains("example1") && err.contains("example2"));
}

#[test]
fn bad_flags_are_usage_errors() {
    assert_eq!(vem_oc(&["solve", "--problem", "lq", "--bogus"]).status.code(), Some(1));
    assert_eq!(vem_oc(&["solve", "--problem", "lq", "--grid-points", "many"]).status.code(), Some(1));
    assert_eq!(vem_oc(&["solve"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(vem_oc(&["solve", "--problem", "lq", "--gain-k", "-1", "--out", out]).status.code(), Some(1));
    assert!(vem_oc(&["--help"]).status.success());
}

#[test]
fn malformed_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    for (name, body) in [("typo.json", r#"{"grid_pionts": 21}"#), ("broken.json", "{ not json"), ("type.json", r#"{"rtol": "small"}"#)] {
        let path = dir.path().join(name);
        fs::write(&path, body).unwrap();
        let res = vem_oc(&["solve", "--problem", "lq", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(res.status.code(), Some(1), "{name}");
    }
    let missing = vem_oc(&["solve", "--problem", "lq", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn lq_run_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let res = vem_oc(&["solve", "--problem", "lq", "--seed", "5", "--out", dir.path().to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let (header, data) = rows(&dir.path().join("trajectory.csv"));
    assert_eq!(header, ["t", "x1", "x2", "u1", "lambda1", "lambda2"]);
    assert_eq!(data.len(), 41);
    let first = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let sample = first.lines().nth(2).unwrap().split(',').next().unwrap();
    let mantissa = sample.split('e').next().unwrap().replace(['-', '.'], "");
    assert_eq!(mantissa.len(), 17, "{sample}");

    let (header, data) = rows(&dir.path().join("history.csv"));
    assert_eq!(header, ["tau", "J", "tf", "g_norm", "maxC", "pu_pc_inf", "transversality"]);
    assert!(data.len() > 1 && data.last().unwrap()[1] < data[0][1]);

    let (header, snaps) = snapshot_index(dir.path());
    assert_eq!(header, ["file", "tau"]);
    assert!(snaps >= 2);

    let s = summary(dir.path());
    assert_eq!(s["status"], "converged");
    assert_eq!(s["problem"], "lq");
    assert_eq!(s["seed"], 5);
    assert!(s["residuals"]["fd_gradient_error"].as_f64().unwrap() < 1e-3);
    assert!(s["steps"]["accepted"].as_u64().unwrap() > 0);
    assert_eq!(s["config"]["gain_k"], 1.0);
}

/// Header and entry count of `snapshots/index.csv`; every listed file must exist.
fn snapshot_index(dir: &Path) -> (Vec<String>, usize) {
    let text = fs::read_to_string(dir.join("snapshots/index.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let mut count = 0;
    for line in lines {
        let file = line.split(',').next().unwrap();
        assert!(dir.join("snapshots").join(file).exists(), "{file}");
        count += 1;
    }
    (header, count)
}

#[test]
fn config_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"grid_points": 21, "tau_end": 7.5, "gain_k": 0.5}"#).unwrap();
    let run = |extra: &[&str], name: &str| {
        let out = dir.path().join(name);
        let mut args = vec!["solve", "--problem", "lq", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        let res = vem_oc(&args);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        summary(&out)["config"].clone()
    };
    let file_only = run(&[], "a");
    assert_eq!(file_only["grid_points"], 21);
    assert_eq!(file_only["tau_end"], 7.5);
    assert_eq!(file_only["gain_k"], 0.5);
    // Untouched keys keep the problem defaults.
    assert_eq!(file_only["rtol"], 1e-3);

    let flagged = run(&["--grid-points", "31", "--repropagate-every", "0"], "b");
    assert_eq!(flagged["grid_points"], 31);
    assert_eq!(flagged["tau_end"], 7.5);
    assert_eq!(flagged["repropagate_every"], Value::Null);
    assert_eq!(rows(&dir.path().join("b/trajectory.csv")).1.len(), 31);
}

#[test]
fn already_converged_start_has_one_history_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"residual_tol": 10.0}"#).unwrap();
    let out = dir.path().join("run");
    let res = vem_oc(&["solve", "--problem", "lq", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(res.status.success());
    assert_eq!(rows(&out.join("history.csv")).1.len(), 1);
    assert_eq!(summary(&out)["steps"]["accepted"], 0);
}

#[test]
fn infeasible_fixed_horizon_is_a_solver_error() {
    // The double integrator cannot reach the origin in 1 s with |u| ≤ 1.
    let dir = tempfile::tempdir().unwrap();
    let res = vem_oc(&["solve", "--problem", "example1", "--fixed-tf", "1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    let s = summary(dir.path());
    assert_eq!(s["status"], "error");
    assert!(s["error"].as_str().unwrap().contains("infeasible"));
    assert!(dir.path().join("history.csv").exists());
}

#[test]
fn example1_summary() {
    let dir = tempfile::tempdir().unwrap();
    let res = vem_oc(&["solve", "--problem", "example1", "--tau-end", "300", "--out", dir.path().to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let s = summary(dir.path());
    assert!((s["tf"].as_f64().unwrap() - 3.44).abs() < 0.02);
    assert!((s["J"].as_f64().unwrap() - s["tf"].as_f64().unwrap()).abs() < 1e-12);
    let pi: Vec<f64> = s["pi"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!((pi[0] - 0.83).abs() < 0.02 && (pi[1] + 1.0).abs() < 0.01, "{pi:?}");
    let (header, _) = rows(&dir.path().join("trajectory.csv"));
    assert_eq!(header, ["t", "x1", "x2", "u1", "mu1", "lambda1", "lambda2"]);
}

#[test]
fn example2_multiplier_column_marks_the_arc() {
    let dir = tempfile::tempdir().unwrap();
    let res = vem_oc(&["solve", "--problem", "example2", "--grid-points", "101", "--out", dir.path().to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert!((summary(dir.path())["tf"].as_f64().unwrap() - 0.8001).abs() < 0.005);
    let (header, data) = rows(&dir.path().join("trajectory.csv"));
    let (x, mu) = (header.iter().position(|h| h == "x1").unwrap(), header.iter().position(|h| h == "mu1").unwrap());
    let on_arc: Vec<f64> = data.iter().filter(|r| r[mu] > 0.0).map(|r| r[x]).collect();
    let (lo, hi) = on_arc.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    assert!((lo - 0.56).abs() < 0.05 && (hi - 1.06).abs() < 0.05, "[{lo}, {hi}]");
    assert!(data.iter().all(|r| r[mu] >= 0.0));
}
