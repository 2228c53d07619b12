use serde_json::Value;
use vem_wasm_demo::{gradient_check_json, problems_json, solve_json, transition_check_json};

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn lists_builtin_problems() {
    let list = parse(&problems_json());
    let names: Vec<&str> = list.as_array().unwrap().iter().map(|p| p["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["example1", "example2", "lq"]);
}

#[test]
fn solves_example2_with_overrides() {
    let out = parse(&solve_json("example2", r#"{"grid_points": 51}"#).unwrap());
    assert!((out["tf"].as_f64().unwrap() - 0.8).abs() < 0.01);
    assert_eq!(out["t"].as_array().unwrap().len(), 51);
    assert_eq!(out["x"].as_array().unwrap().len(), 3);
    assert_eq!(out["mu"][0].as_array().unwrap().len(), 51);
    let cost = out["history"]["cost"].as_array().unwrap();
    assert!(cost.last().unwrap().as_f64().unwrap() < cost[0].as_f64().unwrap());
    assert!(!out["snapshots"].as_array().unwrap().is_empty());
}

#[test]
fn rejects_bad_requests() {
    assert!(solve_json("nosuch", "").is_err());
    assert!(solve_json("lq", r#"{"gridpoints": 3}"#).is_err());
    assert!(solve_json("lq", r#"{"grid_points": 2}"#).is_err());
    assert!(transition_check_json("lq", 1).is_err());
}

#[test]
fn gradient_check_passes() {
    let out = parse(&gradient_check_json(41, 9).unwrap());
    assert!(out["relative_error"].as_f64().unwrap() < 1e-3);
    assert_eq!(out["pu"][0].as_array().unwrap().len(), 41);
}

#[test]
fn transition_check_on_example1() {
    let out = parse(&transition_check_json("example1", 21).unwrap());
    assert_eq!(out["identity_exact"], true);
    assert!(out["semigroup_residual"].as_f64().unwrap() < 1e-8);
    // Φ(t_f, t)₁₂ = t_f − t for the double integrator.
    let tf = out["tf"].as_f64().unwrap();
    let t = out["t"].as_array().unwrap();
    let entry = out["phi_tf"].as_array().unwrap().iter().find(|e| e["row"] == 1 && e["col"] == 2).unwrap();
    for (ti, v) in t.iter().zip(entry["values"].as_array().unwrap()) {
        assert!((v.as_f64().unwrap() - (tf - ti.as_f64().unwrap())).abs() < 1e-10);
    }
}
