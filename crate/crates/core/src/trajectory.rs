use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::problem::{OcpFunctions, OcpProblem};

/// RK4 substeps per grid interval for state propagation and transition matrices.
pub const RK4_SUBSTEPS: usize = 4;

/// States and controls sampled on a [`TimeGrid`]; the grid carries `t_f`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, x: Vec<DVector<f64>>, u: Vec<DVector<f64>>) -> Result<Self> {
        if x.len() != grid.len() || u.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "trajectory has {} states and {} controls for {} nodes",
                x.len(),
                u.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, x, u })
    }

    /// Controls given on the grid, states propagated from `x0`.
    pub fn from_controls<P: OcpFunctions + ?Sized>(p: &P, grid: TimeGrid, u: Vec<DVector<f64>>) -> Result<Self> {
        let x = vec![p.x0(); grid.len()];
        let mut traj = Self::new(grid, x, u)?;
        traj.propagate(p)?;
        Ok(traj)
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn tf(&self) -> f64 {
        self.grid.tf()
    }

    pub fn last(&self) -> usize {
        self.len() - 1
    }

    /// Linear interpolation of the control inside interval `i` at fraction `theta ∈ [0, 1]`.
    pub fn control_at(&self, i: usize, theta: f64) -> DVector<f64> {
        &self.u[i] * (1.0 - theta) + &self.u[i + 1] * theta
    }

    pub fn state_at(&self, i: usize, theta: f64) -> DVector<f64> {
        &self.x[i] * (1.0 - theta) + &self.x[i + 1] * theta
    }

    /// Recompute every state by integrating `ẋ = f(x, u, t)` from `x0` with RK4,
    /// interpolating the control linearly inside each interval.
    pub fn propagate<P: OcpFunctions + ?Sized>(&mut self, p: &P) -> Result<()> {
        let x0 = p.x0();
        self.x[0] = x0;
        for i in 0..self.len() - 1 {
            let t_start = self.grid.time(i);
            let dt = self.grid.spacing(i) / RK4_SUBSTEPS as f64;
            let mut x = self.x[i].clone();
            for s in 0..RK4_SUBSTEPS {
                let th0 = s as f64 / RK4_SUBSTEPS as f64;
                let th1 = (s as f64 + 0.5) / RK4_SUBSTEPS as f64;
                let th2 = (s as f64 + 1.0) / RK4_SUBSTEPS as f64;
                let t = t_start + s as f64 * dt;
                let (u0, u1, u2) = (self.control_at(i, th0), self.control_at(i, th1), self.control_at(i, th2));
                let k1 = p.dynamics(&x, &u0, t);
                let k2 = p.dynamics(&(&x + &k1 * (0.5 * dt)), &u1, t + 0.5 * dt);
                let k3 = p.dynamics(&(&x + &k2 * (0.5 * dt)), &u1, t + 0.5 * dt);
                let k4 = p.dynamics(&(&x + &k3 * dt), &u2, t + dt);
                x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Propagation { node: i + 1 });
            }
            self.x[i + 1] = x;
        }
        Ok(())
    }

    /// Bolza cost `φ(x(t_f), t_f) + ∫ L dt` by trapezoid.
    pub fn cost<P: OcpFunctions + ?Sized>(&self, p: &P) -> f64 {
        let running: Vec<f64> = (0..self.len()).map(|i| p.running_cost(&self.x[i], &self.u[i], self.grid.time(i))).collect();
        let integral = self.grid.quad(&running, 0, self.last()).unwrap_or(f64::NAN);
        p.terminal_cost(&self.x[self.last()], self.tf()) + integral
    }

    /// `g(x(t_f), t_f)`.
    pub fn terminal_residual<P: OcpFunctions + ?Sized>(&self, p: &P) -> DVector<f64> {
        p.terminal_constraint(&self.x[self.last()], self.tf())
    }

    /// Largest positive part of any inequality path constraint over the grid.
    pub fn max_violation<P: OcpFunctions + ?Sized>(&self, p: &P) -> f64 {
        let kinds = p.constraint_kinds();
        let mut worst = 0.0f64;
        for i in 0..self.len() {
            let c = p.path_constraint(&self.x[i], &self.u[i], self.grid.time(i));
            for (k, v) in c.iter().enumerate() {
                let v = if kinds.get(k).is_some_and(|kind| kind.is_inequality()) { *v } else { v.abs() };
                worst = worst.max(v);
            }
        }
        worst
    }

    /// Largest mismatch between stored states and a fresh propagation from `x0`.
    pub fn dynamics_residual<P: OcpProblem + ?Sized>(&self, p: &P) -> Result<f64> {
        let mut fresh = self.clone();
        fresh.propagate(p)?;
        Ok(self.x.iter().zip(&fresh.x).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max))
    }
}
