//! Browser bindings: each operation takes plain arguments and returns JSON.
//!
//! The `*_json` functions hold the logic and are usable natively; the
//! `#[wasm_bindgen]` wrappers only convert errors to JS exceptions.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use vem_core::builtin::{self, LqDoubleIntegrator};
use vem_core::evolution::solve;
use vem_core::gradients::compute_pu;
use vem_core::linearization::Linearization;
use vem_core::transition::TransitionTable;
use vem_core::verification::fd_gradient_check;
use vem_core::{OcpFunctions, TimeGrid, Trajectory};

/// Settings the page may override; everything else keeps the problem defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    pub grid_points: Option<usize>,
    pub tau_end: Option<f64>,
    pub gain_k: Option<f64>,
    pub gain_tf: Option<f64>,
    pub barrier_kc: Option<f64>,
    pub fixed_tf: Option<f64>,
}

#[derive(Serialize)]
struct History {
    tau: Vec<f64>,
    cost: Vec<f64>,
    max_violation: Vec<f64>,
    pu_pc_inf: Vec<f64>,
}

fn columns(rows: &[DVector<f64>]) -> Vec<Vec<f64>> {
    let width = rows.first().map_or(0, |r| r.len());
    (0..width).map(|k| rows.iter().map(|r| r[k]).collect()).collect()
}

pub fn problems_json() -> String {
    let list: Vec<Value> = builtin::NAMES.iter().map(|(name, description)| json!({ "name": name, "description": description })).collect();
    Value::Array(list).to_string()
}

/// Initialises and solves a built-in problem.
pub fn solve_json(name: &str, overrides: &str) -> Result<String, String> {
    let o: Overrides = if overrides.trim().is_empty() { Overrides::default() } else { serde_json::from_str(overrides).map_err(|e| e.to_string())? };
    let b = builtin::by_name(name, o.fixed_tf).ok_or_else(|| format!("unknown problem `{name}`"))?;
    let mut cfg = b.config.clone();
    if let Some(n) = o.grid_points {
        cfg.grid_points = n;
    }
    for (slot, v) in [(&mut cfg.tau_end, o.tau_end), (&mut cfg.gain_k, o.gain_k), (&mut cfg.gain_tf, o.gain_tf), (&mut cfg.barrier_kc, o.barrier_kc)] {
        if let Some(v) = v {
            *slot = v;
        }
    }
    if o.gain_k.is_some() {
        cfg.gain_matrix = None;
    }
    cfg.validate(b.problem.as_ref()).map_err(|e| e.to_string())?;
    let p = b.problem.as_ref();
    let init = b.initial_trajectory(&cfg).map_err(|e| e.to_string())?;
    let out = solve(p, init, &cfg).map_err(|f| f.error.to_string())?;
    let traj = &out.trajectory;
    let h = &out.diagnostics.history;
    let history = History {
        tau: h.iter().map(|r| r.tau).collect(),
        cost: h.iter().map(|r| r.cost).collect(),
        max_violation: h.iter().map(|r| r.max_violation).collect(),
        pu_pc_inf: h.iter().map(|r| r.pu_pc_inf).collect(),
    };
    let snapshots: Vec<Value> = out
        .diagnostics
        .snapshots
        .iter()
        .map(|s| json!({ "tau": s.tau, "t": s.trajectory.grid.times(), "x": columns(&s.trajectory.x), "u": columns(&s.trajectory.u) }))
        .collect();
    let result = json!({
        "problem": b.name,
        "stop": out.stop,
        "tf": traj.tf(),
        "J": traj.cost(p),
        "pi": out.pi().as_slice(),
        "pu_pc_inf": out.pu_pc_inf,
        "max_violation": traj.max_violation(p),
        "t": traj.grid.times(),
        "x": columns(&traj.x),
        "u": columns(&traj.u),
        "mu": columns(&out.multipliers.mu),
        "lambda": columns(&out.costate),
        "history": history,
        "snapshots": snapshots,
        "steps": { "accepted": out.diagnostics.stats.accepted, "rejected": out.diagnostics.stats.rejected },
    });
    Ok(result.to_string())
}

/// Gradient of the LQ double integrator against finite differences.
pub fn gradient_check_json(grid_points: usize, seed: u32) -> Result<String, String> {
    let p = LqDoubleIntegrator::default();
    let grid = TimeGrid::uniform(grid_points, p.t0(), p.tf).map_err(|e| e.to_string())?;
    let u = grid.times().iter().map(|t| DVector::from_element(1, (3.0 * t).sin())).collect();
    let traj = Trajectory::from_controls(&p, grid, u).map_err(|e| e.to_string())?;
    let error = fd_gradient_check(&p, &traj, u64::from(seed)).map_err(|e| e.to_string())?;
    let lin = Linearization::new(&p, &traj).map_err(|e| e.to_string())?;
    let table = TransitionTable::build(&p, &traj, &lin).map_err(|e| e.to_string())?;
    let pu = compute_pu(&lin, &table, &traj.grid);
    Ok(json!({ "relative_error": error, "t": traj.grid.times(), "pu": columns(&pu), "u": columns(&traj.u) }).to_string())
}

/// Transition-table properties on a problem's initial trajectory.
pub fn transition_check_json(name: &str, grid_points: usize) -> Result<String, String> {
    let b = builtin::by_name(name, None).ok_or_else(|| format!("unknown problem `{name}`"))?;
    let cfg = vem_core::SolverConfig { grid_points, ..b.config.clone() };
    cfg.validate(b.problem.as_ref()).map_err(|e| e.to_string())?;
    let p = b.problem.as_ref();
    let traj = b.initial_trajectory(&cfg).map_err(|e| e.to_string())?;
    let lin = Linearization::new(p, &traj).map_err(|e| e.to_string())?;
    let table = TransitionTable::build(p, &traj, &lin).map_err(|e| e.to_string())?;
    let nodes = table.len();
    let n = p.state_dim();
    let identity = (0..nodes).all(|i| *table.phi(i, i) == nalgebra::DMatrix::identity(n, n));
    let mut semigroup = 0.0f64;
    for i in 0..nodes {
        for j in 0..=i {
            for k in 0..=j {
                semigroup = semigroup.max((table.phi(i, k) - table.phi(i, j) * table.phi(j, k)).amax());
            }
        }
    }
    let last = nodes - 1;
    // Φ(t_f, t_j) entry (r, c) as a curve over j.
    let entries: Vec<Value> = (0..n)
        .flat_map(|r| (0..n).map(move |c| (r, c)))
        .map(|(r, c)| json!({ "row": r + 1, "col": c + 1, "values": (0..nodes).map(|j| table.phi(last, j)[(r, c)]).collect::<Vec<_>>() }))
        .collect();
    Ok(json!({
        "problem": b.name,
        "tf": traj.tf(),
        "identity_exact": identity,
        "semigroup_residual": semigroup,
        "t": traj.grid.times(),
        "phi_tf": entries,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn problems() -> String {
    problems_json()
}

#[wasm_bindgen(js_name = solveProblem)]
pub fn solve_problem(name: &str, overrides: &str) -> Result<String, JsValue> {
    solve_json(name, overrides).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = gradientCheck)]
pub fn gradient_check(grid_points: usize, seed: u32) -> Result<String, JsValue> {
    gradient_check_json(grid_points, seed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = transitionCheck)]
pub fn transition_check(name: &str, grid_points: usize) -> Result<String, JsValue> {
    transition_check_json(name, grid_points).map_err(|e| JsValue::from_str(&e))
}
