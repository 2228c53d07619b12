//! Callback evaluations along a trajectory, cached per node.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::{ConstraintKind, OcpProblem};
use crate::trajectory::Trajectory;

/// Everything the kernels need at one grid node.
#[derive(Clone, Debug)]
pub struct NodeData {
    pub t: f64,
    pub f: DVector<f64>,
    pub f_x: DMatrix<f64>,
    pub f_u: DMatrix<f64>,
    pub l: f64,
    pub l_x: DVector<f64>,
    pub l_u: DVector<f64>,
    pub phi_x: DVector<f64>,
    /// `L_x + φ_tx + φ_xxᵀ f + f_xᵀ φ_x`, the integrand of the control gradient.
    pub cost_rate_x: DVector<f64>,
    pub c: DVector<f64>,
    pub c_x: DMatrix<f64>,
    pub c_u: DMatrix<f64>,
}

/// Quantities evaluated at `(x(t_f), t_f)`.
#[derive(Clone, Debug)]
pub struct TerminalData {
    pub g: DVector<f64>,
    pub g_x: DMatrix<f64>,
    pub g_t: DVector<f64>,
    /// `g_xf f + g_tf` at `t_f`.
    pub g_rate: DVector<f64>,
    /// `φ_t + φ_xᵀ f + L` at `t_f`.
    pub cost_rate: f64,
}

#[derive(Clone, Debug)]
pub struct Linearization {
    pub nodes: Vec<NodeData>,
    pub terminal: TerminalData,
    pub kinds: Vec<ConstraintKind>,
    pub n: usize,
    pub m: usize,
    pub q: usize,
    pub r: usize,
}

fn finite_vec(v: &DVector<f64>) -> bool {
    v.iter().all(|e| e.is_finite())
}

fn finite_mat(v: &DMatrix<f64>) -> bool {
    v.iter().all(|e| e.is_finite())
}

impl Linearization {
    pub fn new<P: OcpProblem + ?Sized>(p: &P, traj: &Trajectory) -> Result<Self> {
        let (n, m, q, r) = (p.state_dim(), p.control_dim(), p.terminal_dim(), p.path_dim());
        let mut nodes = Vec::with_capacity(traj.len());
        for i in 0..traj.len() {
            let (x, u, t) = (&traj.x[i], &traj.u[i], traj.grid.time(i));
            let f = p.dynamics(x, u, t);
            let f_x = p.f_x(x, u, t);
            let phi_x = p.phi_x(x, t);
            let cost_rate_x = p.l_x(x, u, t) + p.phi_tx(x, t) + p.phi_xx(x, t).transpose() * &f + f_x.transpose() * &phi_x;
            let node = NodeData {
                t,
                f_u: p.f_u(x, u, t),
                l: p.running_cost(x, u, t),
                l_x: p.l_x(x, u, t),
                l_u: p.l_u(x, u, t),
                c: p.path_constraint(x, u, t),
                c_x: p.c_x(x, u, t),
                c_u: p.c_u(x, u, t),
                f,
                f_x,
                phi_x,
                cost_rate_x,
            };
            let ok = finite_vec(&node.f)
                && finite_mat(&node.f_x)
                && finite_mat(&node.f_u)
                && node.l.is_finite()
                && finite_vec(&node.l_u)
                && finite_vec(&node.cost_rate_x)
                && finite_vec(&node.c)
                && finite_mat(&node.c_x)
                && finite_mat(&node.c_u);
            if !ok {
                return Err(Error::Assembly { node: i });
            }
            if node.f.len() != n || node.f_u.shape() != (n, m) || node.c_x.shape() != (r, n) || node.c_u.shape() != (r, m) {
                return Err(Error::Dimension(format!("callback shapes inconsistent at node {i}")));
            }
            nodes.push(node);
        }

        let last = traj.last();
        let (xf, tf) = (&traj.x[last], traj.tf());
        let g_x = p.g_x(xf, tf);
        let g_t = p.g_t(xf, tf);
        let end = &nodes[last];
        let g_rate = &g_x * &end.f + &g_t;
        let cost_rate = p.phi_t(xf, tf) + end.phi_x.dot(&end.f) + end.l;
        let terminal = TerminalData { g: p.terminal_constraint(xf, tf), g_x, g_t, g_rate, cost_rate };
        if !finite_vec(&terminal.g_rate) || !terminal.cost_rate.is_finite() || !finite_vec(&terminal.g) {
            return Err(Error::Assembly { node: last });
        }
        Ok(Self { nodes, terminal, kinds: p.constraint_kinds(), n, m, q, r })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}
