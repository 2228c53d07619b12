use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};
use vem_core::SolverConfig;

#[derive(Debug, Parser)]
#[command(name = "vem-oc", version, about = "Variation-evolving solver for constrained optimal control problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Initialise, evolve and verify one built-in problem.
    Solve(SolveArgs),
    /// Print the built-in problems.
    List,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Built-in problem name (see `vem-oc list`).
    #[arg(long)]
    pub problem: String,
    /// JSON file with solver settings; keys are `SolverConfig` fields.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub grid_points: Option<usize>,
    #[arg(long, value_name = "T")]
    pub tau_end: Option<f64>,
    #[arg(long, value_name = "V")]
    pub gain_k: Option<f64>,
    #[arg(long, value_name = "V")]
    pub gain_tf: Option<f64>,
    #[arg(long, value_name = "V")]
    pub barrier_kc: Option<f64>,
    #[arg(long, value_name = "V")]
    pub rtol: Option<f64>,
    #[arg(long, value_name = "V")]
    pub atol: Option<f64>,
    /// Solve with this terminal time held fixed.
    #[arg(long, value_name = "V")]
    pub fixed_tf: Option<f64>,
    /// Re-propagate states every N accepted steps; 0 disables it.
    #[arg(long, value_name = "N")]
    pub repropagate_every: Option<usize>,
    #[arg(long, value_name = "DIR", default_value = "vem-out")]
    pub out: PathBuf,
    /// Seed for the finite-difference gradient check directions.
    #[arg(long, value_name = "N", default_value_t = 0)]
    pub seed: u64,
}

/// Problem defaults, then the JSON file, then individual flags.
pub fn resolve_config(defaults: &SolverConfig, args: &SolveArgs) -> Result<SolverConfig, String> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            let file: Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
            overlay(defaults, file).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => defaults.clone(),
    };
    let set = |slot: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut cfg.tau_end, args.tau_end);
    set(&mut cfg.gain_k, args.gain_k);
    set(&mut cfg.gain_tf, args.gain_tf);
    set(&mut cfg.barrier_kc, args.barrier_kc);
    set(&mut cfg.rtol, args.rtol);
    set(&mut cfg.atol, args.atol);
    if let Some(n) = args.grid_points {
        cfg.grid_points = n;
    }
    if let Some(n) = args.repropagate_every {
        cfg.repropagate_every = (n > 0).then_some(n);
    }
    if args.gain_k.is_some() {
        cfg.gain_matrix = None;
    }
    Ok(cfg)
}

fn overlay(defaults: &SolverConfig, file: Value) -> Result<SolverConfig, String> {
    let Value::Object(file) = file else {
        return Err("config must be a JSON object".into());
    };
    let Value::Object(mut merged) = serde_json::to_value(defaults).map_err(|e| e.to_string())? else {
        unreachable!("SolverConfig serialises to an object");
    };
    let known: Map<String, Value> = merged.clone();
    for (key, value) in file {
        if !known.contains_key(&key) {
            let names: Vec<&str> = known.keys().map(String::as_str).collect();
            return Err(format!("unknown key `{key}` (expected one of {})", names.join(", ")));
        }
        merged.insert(key, value);
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| e.to_string())
}
