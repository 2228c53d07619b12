//! State-transition matrices of the linearised dynamics on the grid.
//!
//! `Φ(t_i, t_j)` solves `∂Φ(t, s)/∂t = f_x(t) Φ(t, s)` with `Φ(s, s) = I`.
//! One RK4 integration per interval gives the factors `Φ(t_{i+1}, t_i)`;
//! the rest of the lower triangle follows by chaining products. The impulse
//! response is `H_o(t_i, t_j) = Φ(t_i, t_j) f_u(t_j)` for `i ≥ j` and zero
//! otherwise.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linearization::Linearization;
use crate::problem::OcpProblem;
use crate::trajectory::{Trajectory, RK4_SUBSTEPS};

#[derive(Clone, Debug)]
pub struct TransitionTable {
    len: usize,
    phi: Vec<DMatrix<f64>>,
    ho: Vec<DMatrix<f64>>,
    zero_ho: DMatrix<f64>,
}

#[inline]
fn packed(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

impl TransitionTable {
    pub fn build<P: OcpProblem + ?Sized>(p: &P, traj: &Trajectory, lin: &Linearization) -> Result<Self> {
        let len = traj.len();
        let n = lin.n;
        let steps = interval_factors(p, traj, lin)?;

        let mut phi = Vec::with_capacity(len * (len + 1) / 2);
        for i in 0..len {
            for j in 0..=i {
                let m = if i == j {
                    DMatrix::identity(n, n)
                } else {
                    // Φ(t_i, t_j) = Φ(t_i, t_{i-1}) Φ(t_{i-1}, t_j)
                    &steps[i - 1] * &phi[packed(i - 1, j)]
                };
                phi.push(m);
            }
        }
        let mut ho = Vec::with_capacity(phi.len());
        for i in 0..len {
            for j in 0..=i {
                ho.push(&phi[packed(i, j)] * &lin.nodes[j].f_u);
            }
        }
        Ok(Self { len, phi, ho, zero_ho: DMatrix::zeros(n, lin.m) })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `Φ(t_i, t_j)` for `i ≥ j`.
    pub fn phi(&self, i: usize, j: usize) -> &DMatrix<f64> {
        assert!(j <= i && i < self.len, "phi({i}, {j}) outside the lower triangle");
        &self.phi[packed(i, j)]
    }

    /// `H_o(t_i, t_j)`; zero when `j > i`.
    pub fn ho(&self, i: usize, j: usize) -> &DMatrix<f64> {
        if j > i {
            &self.zero_ho
        } else {
            &self.ho[packed(i, j)]
        }
    }
}

/// `Φ(t_{i+1}, t_i)` for every interval, by RK4 on the variational equation.
fn interval_factors<P: OcpProblem + ?Sized>(p: &P, traj: &Trajectory, lin: &Linearization) -> Result<Vec<DMatrix<f64>>> {
    let n = lin.n;
    let half_steps = 2 * RK4_SUBSTEPS;
    let mut out = Vec::with_capacity(traj.len() - 1);
    for i in 0..traj.len() - 1 {
        let t_start = traj.grid.time(i);
        let h = traj.grid.spacing(i);
        // f_x at fractions k / (2 · substeps) of the interval; endpoints reuse node data.
        let mut jac = Vec::with_capacity(half_steps + 1);
        jac.push(lin.nodes[i].f_x.clone());
        for k in 1..half_steps {
            let theta = k as f64 / half_steps as f64;
            let x = traj.state_at(i, theta);
            let u = traj.control_at(i, theta);
            let a = p.f_x(&x, &u, t_start + theta * h);
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::Assembly { node: i });
            }
            jac.push(a);
        }
        jac.push(lin.nodes[i + 1].f_x.clone());

        let dt = h / RK4_SUBSTEPS as f64;
        let mut m = DMatrix::identity(n, n);
        for s in 0..RK4_SUBSTEPS {
            let (a0, a1, a2) = (&jac[2 * s], &jac[2 * s + 1], &jac[2 * s + 2]);
            let k1 = a0 * &m;
            let k2 = a1 * (&m + &k1 * (0.5 * dt));
            let k3 = a1 * (&m + &k2 * (0.5 * dt));
            let k4 = a2 * (&m + &k3 * dt);
            m += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Assembly { node: i });
        }
        out.push(m);
    }
    Ok(out)
}
