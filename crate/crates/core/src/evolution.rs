//! Variation-time evolution of the trajectory towards the optimum.
//!
//! The unknowns are stacked into one vector, `x` at every node (node 0 stays
//! at `x0`), then `u` at every node, then `t_f`, and integrated in `τ` with
//! the adaptive Dormand–Prince pair. Every few accepted steps the states are
//! re-propagated from the controls to remove linearisation drift, and the
//! controls receive a minimum-norm correction that restores the terminal
//! constraint.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::gradients::{self, MAX_CONDITION};
use crate::grid::TimeGrid;
use crate::integrator::{Dopri5, OdeSystem, Stats, StepError};
use crate::linalg::lu_solve;
use crate::linearization::Linearization;
use crate::multipliers::{self, MultiplierGains, MultiplierState};
use crate::problem::{OcpProblem, TerminalTime};
use crate::trajectory::Trajectory;
use crate::transition::TransitionTable;

/// Relative tolerance of the feasibility gate on dynamics and terminal residuals.
pub const FEASIBILITY_TOL: f64 = 1e-6;
/// Largest path-constraint value the feasibility gate accepts.
pub const CONSTRAINT_TOL: f64 = 1e-6;

const RESTORE_ITERATIONS: usize = 20;
const SNAPSHOT_COUNT: usize = 12;

/// Length of the stacked evolution state: `n·N + m·N + 1`.
pub fn stacked_dimension(n: usize, m: usize, nodes: usize) -> usize {
    n * nodes + m * nodes + 1
}

/// Rates of every stacked unknown.
#[derive(Clone, Debug)]
pub struct Rates {
    pub dx: Vec<DVector<f64>>,
    pub du: Vec<DVector<f64>>,
    pub dtf: f64,
}

/// One right-hand-side evaluation with the intermediate quantities kept.
#[derive(Clone, Debug)]
pub struct RhsEval {
    pub rates: Rates,
    /// `−K p_u^pc`, the control rate at fixed physical time.
    pub control_rate: Vec<DVector<f64>>,
    pub lin: Linearization,
    pub table: TransitionTable,
    pub pu: Vec<DVector<f64>>,
    pub pu_pc: Vec<DVector<f64>>,
    pub multipliers: MultiplierState,
    /// Terminal-time optimality residual; zero for fixed `t_f`.
    pub transversality: f64,
}

impl RhsEval {
    pub fn pu_pc_inf(&self) -> f64 {
        self.pu_pc.iter().map(|p| p.amax()).fold(0.0, f64::max)
    }

    pub fn pi(&self) -> &DVector<f64> {
        self.multipliers.pi()
    }
}

pub fn multiplier_gains<P: OcpProblem + ?Sized>(p: &P, cfg: &SolverConfig) -> MultiplierGains {
    MultiplierGains {
        k: cfg.gain(p.control_dim()),
        k_tf: cfg.effective_gain_tf(p),
        k_c: cfg.barrier_kc,
        active_tol: cfg.active_tol,
        sign_tol: cfg.sign_tol,
        tikhonov: cfg.tikhonov,
    }
}

/// Multipliers for the current trajectory; `μ ≡ 0` when there are no path constraints.
pub fn solve_multipliers(
    lin: &Linearization,
    table: &TransitionTable,
    grid: &TimeGrid,
    pu: &[DVector<f64>],
    gains: &MultiplierGains,
) -> Result<MultiplierState> {
    if lin.r > 0 {
        return multipliers::solve_mu(lin, table, grid, pu, gains);
    }
    let mu = vec![DVector::zeros(0); grid.len()];
    let pi = gradients::solve_pi(lin, table, grid, &gains.k, gains.k_tf, pu, &mu)?;
    Ok(MultiplierState { mu, active: Vec::new(), pi, iterations: 0 })
}

/// Right-hand side of the evolution equations at `traj`.
pub fn evolution_rhs<P: OcpProblem + ?Sized>(p: &P, traj: &Trajectory, cfg: &SolverConfig) -> Result<RhsEval> {
    let grid = &traj.grid;
    let lin = Linearization::new(p, traj)?;
    let table = TransitionTable::build(p, traj, &lin)?;
    let pu = gradients::compute_pu(&lin, &table, grid);
    let gains = multiplier_gains(p, cfg);
    let multipliers = solve_multipliers(&lin, &table, grid, &pu, &gains)?;
    let pu_pc = gradients::compute_pu_pc(&lin, &table, grid, &pu, multipliers.pi(), &multipliers.mu);

    let control_rate: Vec<DVector<f64>> = pu_pc.iter().map(|v| -(&gains.k * v)).collect();
    let mut du = control_rate.clone();
    let transversality = match p.terminal_time() {
        TerminalTime::Free => gradients::transversality(&lin, multipliers.pi()),
        TerminalTime::Fixed(_) => 0.0,
    };
    let dtf = -gains.k_tf * transversality;
    let mut dx = gradients::impulse_response(&table, grid, &control_rate);
    if cfg.node_motion && dtf != 0.0 {
        // Nodes slide in physical time as t_f changes; carry x and u along.
        let last = grid.len() - 1;
        for i in 1..grid.len() {
            let speed = grid.fraction(i) * dtf;
            dx[i] += &lin.nodes[i].f * speed;
            let slope = if dtf > 0.0 && i < last {
                (&traj.u[i + 1] - &traj.u[i]) / grid.spacing(i)
            } else {
                (&traj.u[i] - &traj.u[i - 1]) / grid.spacing(i - 1)
            };
            du[i] += slope * speed;
        }
    }
    dx[0].fill(0.0);

    for i in 0..grid.len() {
        if dx[i].iter().chain(du[i].iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteRate { node: i });
        }
    }
    if !dtf.is_finite() {
        return Err(Error::NonFiniteRate { node: grid.len() - 1 });
    }
    Ok(RhsEval { rates: Rates { dx, du, dtf }, control_rate, lin, table, pu, pu_pc, multipliers, transversality })
}

/// Recompute the states of `traj` from its controls.
pub fn propagate_states<P: OcpProblem + ?Sized>(p: &P, traj: &Trajectory) -> Result<Trajectory> {
    let mut out = traj.clone();
    out.propagate(p)?;
    Ok(out)
}

/// Gauss–Newton correction of the controls towards `g = 0`.
///
/// Each pass applies the minimum `K⁻¹`-norm control change that cancels the
/// linearised terminal residual, then re-propagates. Returns the final `‖g‖`.
pub fn restore_terminal<P: OcpProblem + ?Sized>(p: &P, traj: &mut Trajectory, k: &DMatrix<f64>) -> Result<f64> {
    let mut g = traj.terminal_residual(p);
    if g.is_empty() {
        return Ok(0.0);
    }
    let last = traj.last();
    for _ in 0..RESTORE_ITERATIONS {
        let scale = 1.0 + traj.x[last].amax();
        if g.norm() <= 1e-12 * scale {
            break;
        }
        let lin = Linearization::new(p, traj)?;
        let table = TransitionTable::build(p, traj, &lin)?;
        let m0 = gradients::terminal_gramian(&lin, &table, &traj.grid, k, 0.0);
        let nu = lu_solve(&m0, &g, MAX_CONDITION).map_err(|condition| Error::Controllability { condition })?.x;
        let pull = lin.terminal.g_x.tr_mul(&nu);
        let before = g.norm();
        let saved = traj.u.clone();
        for (t, u) in traj.u.iter_mut().enumerate() {
            *u -= k * table.ho(last, t).tr_mul(&pull);
        }
        traj.propagate(p)?;
        g = traj.terminal_residual(p);
        if !(g.norm() < before) {
            traj.u = saved;
            traj.propagate(p)?;
            g = traj.terminal_residual(p);
            break;
        }
    }
    Ok(g.norm())
}

/// Worst violations of an initial trajectory, each already scaled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Feasibility {
    pub dynamics: f64,
    pub terminal: f64,
    pub path: f64,
}

impl Feasibility {
    pub fn measure<P: OcpProblem + ?Sized>(p: &P, traj: &Trajectory) -> Result<Self> {
        let scale = 1.0 + traj.x.iter().map(|x| x.amax()).fold(0.0, f64::max);
        Ok(Self {
            dynamics: traj.dynamics_residual(p)? / scale,
            terminal: traj.terminal_residual(p).amax() / scale,
            path: traj.max_violation(p),
        })
    }

    pub fn is_feasible(&self) -> bool {
        self.dynamics <= FEASIBILITY_TOL && self.terminal <= FEASIBILITY_TOL && self.path <= CONSTRAINT_TOL
    }
}

/// Rejects trajectories that do not satisfy dynamics, terminal and path constraints.
pub fn check_feasible<P: OcpProblem + ?Sized>(p: &P, traj: &Trajectory) -> Result<()> {
    let f = Feasibility::measure(p, traj)?;
    if f.is_feasible() {
        Ok(())
    } else {
        Err(Error::InfeasibleInit(format!(
            "dynamics residual {:.3e}, terminal residual {:.3e}, path violation {:.3e}",
            f.dynamics, f.terminal, f.path
        )))
    }
}

/// One row of the evolution history.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HistoryRecord {
    pub tau: f64,
    pub cost: f64,
    pub tf: f64,
    pub g_norm: f64,
    pub max_violation: f64,
    pub pu_pc_inf: f64,
    pub transversality: f64,
}

/// States and controls at one variation time.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub tau: f64,
    pub trajectory: Trajectory,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    TauEnd,
    MaxSteps,
    /// Stopped by a caller-supplied predicate.
    Monitor,
}

#[derive(Clone, Debug, Default)]
pub struct Diagnostics {
    pub history: Vec<HistoryRecord>,
    pub snapshots: Vec<Snapshot>,
    pub stats: Stats,
    pub repropagations: usize,
}

#[derive(Clone, Debug)]
pub struct SolveOutput {
    pub trajectory: Trajectory,
    pub multipliers: MultiplierState,
    pub costate: Vec<DVector<f64>>,
    pub pu_pc_inf: f64,
    pub transversality: f64,
    pub stop: StopReason,
    pub diagnostics: Diagnostics,
}

impl SolveOutput {
    pub fn pi(&self) -> &DVector<f64> {
        self.multipliers.pi()
    }

    pub fn converged(&self) -> bool {
        self.stop == StopReason::Converged
    }
}

/// A failed solve together with whatever history was gathered.
#[derive(Debug)]
pub struct SolveFailure {
    pub error: Error,
    pub diagnostics: Diagnostics,
}

impl std::fmt::Display for SolveFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} history records)", self.error, self.diagnostics.history.len())
    }
}

impl std::error::Error for SolveFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<Error> for SolveFailure {
    fn from(error: Error) -> Self {
        Self { error, diagnostics: Diagnostics::default() }
    }
}

impl From<SolveFailure> for Error {
    fn from(f: SolveFailure) -> Self {
        f.error
    }
}

struct Layout {
    n: usize,
    m: usize,
    nodes: usize,
}

impl Layout {
    fn dim(&self) -> usize {
        stacked_dimension(self.n, self.m, self.nodes)
    }

    fn pack(&self, traj: &Trajectory) -> Vec<f64> {
        let mut y = Vec::with_capacity(self.dim());
        for x in &traj.x {
            y.extend(x.iter());
        }
        for u in &traj.u {
            y.extend(u.iter());
        }
        y.push(traj.tf());
        y
    }

    fn pack_rates(&self, rates: &Rates, dy: &mut [f64]) {
        let mut k = 0;
        for v in rates.dx.iter().chain(&rates.du) {
            dy[k..k + v.len()].copy_from_slice(v.as_slice());
            k += v.len();
        }
        dy[k] = rates.dtf;
    }

    fn unpack(&self, template: &TimeGrid, y: &[f64]) -> Result<Trajectory> {
        let (n, m, nodes) = (self.n, self.m, self.nodes);
        let mut grid = template.clone();
        grid.set_tf(y[self.dim() - 1])?;
        let x = (0..nodes).map(|i| DVector::from_column_slice(&y[i * n..(i + 1) * n])).collect();
        let off = n * nodes;
        let u = (0..nodes).map(|i| DVector::from_column_slice(&y[off + i * m..off + (i + 1) * m])).collect();
        Trajectory::new(grid, x, u)
    }
}

struct EvolutionSystem<'a, P: ?Sized> {
    p: &'a P,
    cfg: &'a SolverConfig,
    layout: Layout,
    template: TimeGrid,
    last: Option<RhsEval>,
}

impl<P: OcpProblem + ?Sized> OdeSystem for EvolutionSystem<'_, P> {
    type Error = Error;

    fn rhs(&mut self, _tau: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteRate { node: 0 });
        }
        let traj = self.layout.unpack(&self.template, y)?;
        let eval = evolution_rhs(self.p, &traj, self.cfg)?;
        self.layout.pack_rates(&eval.rates, dy);
        self.last = Some(eval);
        Ok(())
    }
}

fn record<P: OcpProblem + ?Sized>(p: &P, tau: f64, traj: &Trajectory, eval: &RhsEval) -> HistoryRecord {
    HistoryRecord {
        tau,
        cost: traj.cost(p),
        tf: traj.tf(),
        g_norm: traj.terminal_residual(p).norm(),
        max_violation: traj.max_violation(p),
        pu_pc_inf: eval.pu_pc_inf(),
        transversality: eval.transversality.abs(),
    }
}

fn snapshot_times(tau_end: f64) -> Vec<f64> {
    let lo = (tau_end * 1e-3).max(1e-6);
    let ratio = (tau_end / lo).powf(1.0 / (SNAPSHOT_COUNT - 2) as f64);
    let mut out = vec![0.0];
    let mut t = lo;
    for _ in 0..SNAPSHOT_COUNT - 1 {
        out.push(t.min(tau_end));
        t *= ratio;
    }
    out
}

/// Evolves `init` until the optimality residuals vanish or `τ_end` is reached.
pub fn solve<P: OcpProblem + ?Sized>(p: &P, init: Trajectory, cfg: &SolverConfig) -> std::result::Result<SolveOutput, SolveFailure> {
    solve_monitored(p, init, cfg, &mut |_: &Trajectory| false)
}

/// [`solve`] with a predicate checked on every restored trajectory; returning
/// `true` stops the evolution.
pub fn solve_monitored<P: OcpProblem + ?Sized>(
    p: &P,
    init: Trajectory,
    cfg: &SolverConfig,
    monitor: &mut dyn FnMut(&Trajectory) -> bool,
) -> std::result::Result<SolveOutput, SolveFailure> {
    cfg.validate(p)?;
    if init.x.first().map(|x| x.len()) != Some(p.state_dim()) || init.u.first().map(|u| u.len()) != Some(p.control_dim()) {
        return Err(Error::Dimension("initial trajectory does not match the problem dimensions".into()).into());
    }
    if let TerminalTime::Fixed(tf) = p.terminal_time() {
        if (init.tf() - tf).abs() > 1e-12 * tf.abs().max(1.0) {
            return Err(Error::InfeasibleInit(format!("initial t_f = {} but the problem fixes t_f = {tf}", init.tf())).into());
        }
    }
    check_feasible(p, &init)?;

    let layout = Layout { n: p.state_dim(), m: p.control_dim(), nodes: init.len() };
    let k = cfg.gain(p.control_dim());
    let mut sys = EvolutionSystem { p, cfg, layout, template: init.grid.clone(), last: None };
    let mut diag = Diagnostics::default();
    let mut traj = init;

    let mut tau = 0.0;
    let mut y = sys.layout.pack(&traj);
    let mut stepper = Dopri5::new(cfg.rtol, cfg.atol);
    stepper.h_min = 1e-12 * cfg.tau_end.max(1.0);
    let snap_at = snapshot_times(cfg.tau_end);
    let mut next_snap = 0;

    let fail = |error: Error, diag: Diagnostics| SolveFailure { error, diagnostics: diag };

    let first = match evolution_rhs(p, &traj, cfg) {
        Ok(e) => e,
        Err(e) => return Err(fail(e, diag)),
    };
    let mut current = record(p, tau, &traj, &first);
    diag.history.push(current);
    diag.snapshots.push(Snapshot { tau, trajectory: traj.clone() });
    next_snap += 1;
    let mut eval = first;

    let converged = |r: &HistoryRecord| r.pu_pc_inf < cfg.residual_tol && r.transversality < cfg.residual_tol;
    let mut stop = if converged(&current) { Some(StopReason::Converged) } else { None };
    let mut since_restore = 0;

    while stop.is_none() {
        if tau >= cfg.tau_end {
            stop = Some(StopReason::TauEnd);
            break;
        }
        if stepper.stats.accepted >= cfg.max_steps {
            stop = Some(StopReason::MaxSteps);
            break;
        }
        match stepper.step(&mut sys, &mut tau, &mut y, cfg.tau_end) {
            Ok(_) => {}
            Err(StepError::Rhs(e)) => {
                diag.stats = stepper.stats;
                return Err(fail(e, diag));
            }
            Err(StepError::Underflow { t, h }) => {
                diag.stats = stepper.stats;
                return Err(fail(Error::StepUnderflow { tau: t, step: h }, diag));
            }
        }
        traj = match sys.layout.unpack(&sys.template, &y) {
            Ok(t) => t,
            Err(e) => return Err(fail(e, diag)),
        };
        eval = sys.last.take().expect("an accepted step evaluates the new state");
        current = record(p, tau, &traj, &eval);
        diag.history.push(current);
        while next_snap < snap_at.len() && tau >= snap_at[next_snap] {
            diag.snapshots.push(Snapshot { tau, trajectory: traj.clone() });
            next_snap += 1;
            while next_snap < snap_at.len() && tau >= snap_at[next_snap] {
                next_snap += 1;
            }
        }
        if converged(&current) {
            stop = Some(StopReason::Converged);
            break;
        }

        since_restore += 1;
        if cfg.repropagate_every.is_some_and(|every| since_restore >= every) {
            since_restore = 0;
            let restored = traj.propagate(p).and_then(|_| restore_terminal(p, &mut traj, &k));
            if let Err(e) = restored {
                diag.stats = stepper.stats;
                return Err(fail(e, diag));
            }
            diag.repropagations += 1;
            y = sys.layout.pack(&traj);
            stepper.reset();
            if monitor(&traj) {
                stop = Some(StopReason::Monitor);
                break;
            }
        }
    }
    let stop = stop.unwrap_or(StopReason::TauEnd);

    if cfg.repropagate_every.is_some() && since_restore > 0 {
        let restored = traj.propagate(p).and_then(|_| restore_terminal(p, &mut traj, &k));
        if let Err(e) = restored {
            diag.stats = stepper.stats;
            return Err(fail(e, diag));
        }
        diag.repropagations += 1;
        eval = match evolution_rhs(p, &traj, cfg) {
            Ok(e) => e,
            Err(e) => return Err(fail(e, diag)),
        };
    }
    if diag.snapshots.last().is_none_or(|s| s.tau < tau) {
        diag.snapshots.push(Snapshot { tau, trajectory: traj.clone() });
    }
    diag.stats = stepper.stats;

    let costate = gradients::recover_costate(&eval.lin, &eval.table, &traj.grid, eval.pi(), &eval.multipliers.mu);
    Ok(SolveOutput {
        pu_pc_inf: eval.pu_pc_inf(),
        transversality: eval.transversality.abs(),
        multipliers: eval.multipliers,
        trajectory: traj,
        costate,
        stop,
        diagnostics: diag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stacked_dimensions() {
        assert_eq!(stacked_dimension(2, 1, 41), 124);
        assert_eq!(stacked_dimension(3, 1, 101), 405);
    }

    #[test]
    fn snapshots_are_log_spaced_and_end_at_tau_end() {
        let s = snapshot_times(300.0);
        assert_eq!(s[0], 0.0);
        assert!((s.last().unwrap() - 300.0).abs() < 1e-9);
        let r1 = s[2] / s[1];
        let r2 = s[5] / s[4];
        assert!((r1 - r2).abs() < 1e-9);
    }
}
