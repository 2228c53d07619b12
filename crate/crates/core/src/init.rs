//! Feasible initial trajectories.
//!
//! Either sampled from closed-form expressions, or produced by solving an
//! auxiliary fixed-`t_f` problem whose cost pushes the path constraints
//! inside their feasible region while the terminal constraint is kept.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::evolution::{self, check_feasible, restore_terminal, Feasibility};
use crate::grid::TimeGrid;
use crate::problem::{ConstraintKind, OcpFunctions, OcpProblem, TerminalTime};
use crate::trajectory::Trajectory;

/// Weight of the `½ε‖u‖²` smoothing added to the constraint-sum cost.
pub const SMOOTHING: f64 = 1e-6;

/// Running cost of the feasibility-search problem.
#[derive(Clone, Debug, PartialEq)]
pub enum FssopCost {
    /// `Σ w_i C_i`, with `½ε‖u‖²` added when every constraint is pure-state.
    ConstraintSum { weights: Vec<f64> },
    /// `½‖u‖²`.
    ControlEnergy,
}

/// Closed-form initial guess on `[t0, tf]`.
pub struct ClosedForm {
    pub tf: f64,
    pub state: Box<dyn Fn(f64) -> DVector<f64> + Send + Sync>,
    pub control: Box<dyn Fn(f64) -> DVector<f64> + Send + Sync>,
}

impl fmt::Debug for ClosedForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClosedForm").field("tf", &self.tf).finish_non_exhaustive()
    }
}

/// Samples `spec` on a uniform grid and checks it against the problem.
pub fn straight_line_init<P: OcpProblem + ?Sized>(p: &P, spec: &ClosedForm, grid_points: usize) -> Result<Trajectory> {
    let grid = TimeGrid::uniform(grid_points, p.t0(), spec.tf)?;
    let times = grid.times();
    let x: Vec<DVector<f64>> = times.iter().map(|&t| (spec.state)(t)).collect();
    let u: Vec<DVector<f64>> = times.iter().map(|&t| (spec.control)(t)).collect();
    if x.iter().any(|v| v.len() != p.state_dim()) || u.iter().any(|v| v.len() != p.control_dim()) {
        return Err(Error::Dimension("closed-form initializer has the wrong dimensions".into()));
    }
    let traj = Trajectory::new(grid, x, u)?;
    check_feasible(p, &traj)?;
    Ok(traj)
}

/// Fixed-`t_f` auxiliary problem: same dynamics and terminal constraint,
/// running cost from [`FssopCost`], no path constraints.
pub struct FeasibilityProblem<'a, P: ?Sized> {
    inner: &'a P,
    tf: f64,
    cost: FssopCost,
    smoothing: f64,
}

impl<'a, P: OcpProblem + ?Sized> FeasibilityProblem<'a, P> {
    pub fn new(inner: &'a P, tf: f64, cost: FssopCost) -> Self {
        let smoothing = match &cost {
            FssopCost::ConstraintSum { .. } if inner.constraint_kinds().iter().all(|k| *k == ConstraintKind::PureState) => SMOOTHING,
            _ => 0.0,
        };
        Self { inner, tf, cost, smoothing }
    }

    fn weights(&self) -> &[f64] {
        match &self.cost {
            FssopCost::ConstraintSum { weights } => weights,
            FssopCost::ControlEnergy => &[],
        }
    }
}

impl<P: OcpProblem + ?Sized> OcpFunctions for FeasibilityProblem<'_, P> {
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }
    fn control_dim(&self) -> usize {
        self.inner.control_dim()
    }
    fn terminal_dim(&self) -> usize {
        self.inner.terminal_dim()
    }
    fn t0(&self) -> f64 {
        self.inner.t0()
    }
    fn x0(&self) -> DVector<f64> {
        self.inner.x0()
    }
    fn terminal_time(&self) -> TerminalTime {
        TerminalTime::Fixed(self.tf)
    }
    fn constraint_kinds(&self) -> Vec<ConstraintKind> {
        Vec::new()
    }
    fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DVector<f64> {
        self.inner.dynamics(x, u, t)
    }
    fn running_cost(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> f64 {
        match &self.cost {
            FssopCost::ControlEnergy => 0.5 * u.norm_squared(),
            FssopCost::ConstraintSum { .. } => {
                let c = self.inner.path_constraint(x, u, t);
                c.dot(&DVector::from_column_slice(self.weights())) + 0.5 * self.smoothing * u.norm_squared()
            }
        }
    }
    fn terminal_constraint(&self, x: &DVector<f64>, t: f64) -> DVector<f64> {
        self.inner.terminal_constraint(x, t)
    }
}

impl<P: OcpProblem + ?Sized> OcpProblem for FeasibilityProblem<'_, P> {
    fn f_x(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DMatrix<f64> {
        self.inner.f_x(x, u, t)
    }
    fn f_u(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DMatrix<f64> {
        self.inner.f_u(x, u, t)
    }
    fn l_x(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DVector<f64> {
        match &self.cost {
            FssopCost::ControlEnergy => DVector::zeros(x.len()),
            FssopCost::ConstraintSum { .. } => self.inner.c_x(x, u, t).tr_mul(&DVector::from_column_slice(self.weights())),
        }
    }
    fn l_u(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DVector<f64> {
        match &self.cost {
            FssopCost::ControlEnergy => u.clone(),
            FssopCost::ConstraintSum { .. } => {
                self.inner.c_u(x, u, t).tr_mul(&DVector::from_column_slice(self.weights())) + u * self.smoothing
            }
        }
    }
    fn phi_x(&self, x: &DVector<f64>, _t: f64) -> DVector<f64> {
        DVector::zeros(x.len())
    }
    fn phi_t(&self, _x: &DVector<f64>, _t: f64) -> f64 {
        0.0
    }
    fn phi_xx(&self, x: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        DMatrix::zeros(x.len(), x.len())
    }
    fn phi_tx(&self, x: &DVector<f64>, _t: f64) -> DVector<f64> {
        DVector::zeros(x.len())
    }
    fn g_x(&self, x: &DVector<f64>, t: f64) -> DMatrix<f64> {
        self.inner.g_x(x, t)
    }
    fn g_t(&self, x: &DVector<f64>, t: f64) -> DVector<f64> {
        self.inner.g_t(x, t)
    }
    fn c_x(&self, x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        DMatrix::zeros(0, x.len())
    }
    fn c_u(&self, _x: &DVector<f64>, u: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        DMatrix::zeros(0, u.len())
    }
}

/// Feasible initial trajectory with `t_f = tf_guess`.
///
/// Starts from zero control, restores the terminal constraint with a
/// minimum-norm control correction and, if path constraints are still
/// violated, evolves the auxiliary problem until the feasibility gate passes.
pub fn solve_fssop<P: OcpProblem + ?Sized>(p: &P, tf_guess: f64, cfg: &SolverConfig, cost: Option<&FssopCost>) -> Result<Trajectory> {
    let grid = TimeGrid::uniform(cfg.grid_points, p.t0(), tf_guess)?;
    let mut traj = Trajectory::from_controls(p, grid, vec![DVector::zeros(p.control_dim()); cfg.grid_points])?;
    if p.terminal_dim() == 0 && p.path_dim() == 0 {
        return Ok(traj);
    }
    let k = cfg.gain(p.control_dim());
    restore_terminal(p, &mut traj, &k)?;
    if Feasibility::measure(p, &traj)?.is_feasible() {
        return Ok(traj);
    }

    let cost = cost.cloned().unwrap_or_else(|| FssopCost::ConstraintSum { weights: vec![1.0; p.path_dim()] });
    if let FssopCost::ConstraintSum { weights } = &cost {
        if weights.len() != p.path_dim() || weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Config("feasibility weights must be positive, one per path constraint".into()));
        }
    }
    let aux = FeasibilityProblem::new(p, tf_guess, cost);
    let mut aux_cfg = cfg.clone();
    aux_cfg.repropagate_every = Some(cfg.repropagate_every.unwrap_or(10).min(5));
    let out = evolution::solve_monitored(&aux, traj, &aux_cfg, &mut |t: &Trajectory| {
        Feasibility::measure(p, t).is_ok_and(|f| f.is_feasible())
    })?;
    let result = out.trajectory;
    let worst = Feasibility::measure(p, &result)?;
    if !worst.is_feasible() {
        return Err(Error::InfeasibleInit(format!(
            "feasibility search ended with dynamics residual {:.3e}, terminal residual {:.3e}, path violation {:.3e}",
            worst.dynamics, worst.terminal, worst.path
        )));
    }
    Ok(result)
}
