mod args;
mod output;

use std::fs;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use serde::Serialize;
use vem_core::builtin::{self, Builtin};
use vem_core::evolution::{solve, Diagnostics, Feasibility, SolveOutput, StopReason};
use vem_core::verification::{classic_residuals, fd_gradient_check, ClassicResiduals};
use vem_core::{Error, OcpProblem, SolverConfig, TerminalTime};

use args::{resolve_config, Cli, Command, SolveArgs};

const USAGE: u8 = 1;
const SOLVER: u8 = 2;

#[derive(Serialize)]
struct Steps {
    accepted: usize,
    rejected: usize,
    evaluations: usize,
    repropagations: usize,
    history_records: usize,
}

impl Steps {
    fn from(d: &Diagnostics) -> Self {
        Self {
            accepted: d.stats.accepted,
            rejected: d.stats.rejected,
            evaluations: d.stats.evaluations,
            repropagations: d.repropagations,
            history_records: d.history.len(),
        }
    }
}

#[derive(Serialize)]
struct Residuals {
    pu_pc_inf: f64,
    transversality: f64,
    terminal_norm: f64,
    max_violation: f64,
    dynamics: f64,
    classic: Option<ClassicResiduals>,
    fd_gradient_error: Option<f64>,
}

#[derive(Serialize)]
struct Summary<'a> {
    problem: &'a str,
    status: &'a str,
    stop: Option<StopReason>,
    error: Option<String>,
    tf: Option<f64>,
    #[serde(rename = "J")]
    j: Option<f64>,
    pi: Vec<f64>,
    residuals: Option<Residuals>,
    steps: Steps,
    fixed_tf: Option<f64>,
    seed: u64,
    config: &'a SolverConfig,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::List => {
            print_problems(&mut std::io::stdout());
            ExitCode::SUCCESS
        }
        Command::Solve(args) => run(&args),
    }
}

fn print_problems(w: &mut dyn std::io::Write) {
    let _ = writeln!(w, "available problems:");
    for (name, description) in builtin::NAMES {
        let _ = writeln!(w, "  {name:<10} {description}");
    }
}

fn run(args: &SolveArgs) -> ExitCode {
    let Some(b) = builtin::by_name(&args.problem, args.fixed_tf) else {
        eprintln!("error: unknown problem `{}`", args.problem);
        print_problems(&mut std::io::stderr());
        return ExitCode::from(USAGE);
    };
    let cfg = match resolve_config(&b.config, args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(USAGE);
        }
    };
    if let Err(e) = cfg.validate(b.problem.as_ref()) {
        eprintln!("error: {e}");
        return ExitCode::from(USAGE);
    }
    if let Some(tf) = args.fixed_tf {
        if !(tf > b.problem.t0()) {
            eprintln!("error: --fixed-tf must exceed the initial time");
            return ExitCode::from(USAGE);
        }
    }
    if let Err(e) = fs::create_dir_all(&args.out) {
        eprintln!("error: cannot create {}: {e}", args.out.display());
        return ExitCode::from(USAGE);
    }

    let init = match b.initial_trajectory(&cfg) {
        Ok(init) => init,
        Err(e) => return fail(&b, &cfg, args, &e, &Diagnostics::default()),
    };
    // Checked at the start, where the gradient is far from zero.
    let fd = fd_check(b.problem.as_ref(), &init, args.seed);
    match solve(b.problem.as_ref(), init, &cfg) {
        Ok(out) => finish(&b, &cfg, args, &out, fd),
        Err(f) => fail(&b, &cfg, args, &f.error, &f.diagnostics),
    }
}

fn finish(b: &Builtin, cfg: &SolverConfig, args: &SolveArgs, out: &SolveOutput, fd: Option<f64>) -> ExitCode {
    let p = b.problem.as_ref();
    let traj = &out.trajectory;
    let feasibility = Feasibility::measure(p, traj).ok();
    let classic = classic_residuals(p, traj, &out.costate, out.pi(), &out.multipliers.mu).ok();
    let residuals = Residuals {
        pu_pc_inf: out.pu_pc_inf,
        transversality: out.transversality.abs(),
        terminal_norm: traj.terminal_residual(p).norm(),
        max_violation: traj.max_violation(p),
        dynamics: feasibility.map_or(f64::NAN, |f| f.dynamics),
        classic,
        fd_gradient_error: fd,
    };
    // Output is held to the accuracy of the convergence test: without
    // re-propagation the states keep their linearisation drift, and barrier
    // violations only decay with the evolution.
    let tol = 10.0 * cfg.residual_tol;
    let feasible = feasibility.is_some_and(|f| f.dynamics <= tol && f.terminal <= tol && f.path <= tol);
    let accepted = matches!(out.stop, StopReason::Converged | StopReason::TauEnd) && feasible;
    let status = match (accepted, out.stop) {
        (true, StopReason::Converged) => "converged",
        (true, _) => "tau_end",
        (false, StopReason::MaxSteps) => "max_steps",
        (false, _) => "infeasible",
    };
    let summary = Summary {
        problem: b.name,
        status,
        stop: Some(out.stop),
        error: None,
        tf: Some(traj.tf()),
        j: Some(traj.cost(p)),
        pi: out.pi().iter().copied().collect(),
        residuals: Some(residuals),
        steps: Steps::from(&out.diagnostics),
        fixed_tf: args.fixed_tf,
        seed: args.seed,
        config: cfg,
    };
    let dir = &args.out;
    let written = output::write_trajectory(&dir.join("trajectory.csv"), traj, &out.multipliers.mu, &out.costate)
        .and_then(|_| output::write_history(&dir.join("history.csv"), &out.diagnostics.history))
        .and_then(|_| output::write_snapshots(&dir.join("snapshots"), &out.diagnostics.snapshots))
        .and_then(|_| output::write_json(&dir.join("summary.json"), &summary));
    if let Err(e) = written {
        eprintln!("error: cannot write results to {}: {e}", dir.display());
        return ExitCode::from(SOLVER);
    }

    let pi: Vec<String> = summary.pi.iter().map(|v| format!("{v:.6}")).collect();
    println!(
        "{}: {status} at tau = {:.4}, tf = {:.6}, J = {:.6}, pi = [{}], |p_u^pc| = {:.2e}",
        b.name,
        out.diagnostics.history.last().map_or(0.0, |h| h.tau),
        traj.tf(),
        traj.cost(p),
        pi.join(", "),
        out.pu_pc_inf
    );
    println!("results written to {}", dir.display());
    if accepted {
        ExitCode::SUCCESS
    } else {
        eprintln!("error: run ended with status {status}; see {}", dir.join("summary.json").display());
        ExitCode::from(SOLVER)
    }
}

fn fd_check(p: &dyn OcpProblem, traj: &vem_core::Trajectory, seed: u64) -> Option<f64> {
    let eligible = p.terminal_dim() == 0 && p.path_dim() == 0 && matches!(p.terminal_time(), TerminalTime::Fixed(_));
    eligible.then(|| fd_gradient_check(p, traj, seed).ok()).flatten()
}

fn fail(b: &Builtin, cfg: &SolverConfig, args: &SolveArgs, error: &Error, diagnostics: &Diagnostics) -> ExitCode {
    let dir: &Path = &args.out;
    let summary = Summary {
        problem: b.name,
        status: "error",
        stop: None,
        error: Some(error.to_string()),
        tf: None,
        j: None,
        pi: Vec::new(),
        residuals: None,
        steps: Steps::from(diagnostics),
        fixed_tf: args.fixed_tf,
        seed: args.seed,
        config: cfg,
    };
    let written = output::write_history(&dir.join("history.csv"), &diagnostics.history)
        .and_then(|_| output::write_json(&dir.join("summary.json"), &summary));
    eprintln!("error: {error}");
    match written {
        Ok(()) => eprintln!("diagnostics written to {}", dir.display()),
        Err(e) => eprintln!("error: cannot write diagnostics to {}: {e}", dir.display()),
    }
    ExitCode::from(SOLVER)
}
