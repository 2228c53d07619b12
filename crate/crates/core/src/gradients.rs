//! Costate-free control gradient, terminal multiplier and costate recovery.
//!
//! All time integrals are composite trapezoids on the grid nodes. Two
//! discrete operators recur everywhere:
//!
//! * the impulse response `δx_j = Σ_{k≤j} w^{[0,j]}_k H_o(t_j, t_k) δu_k`
//!   (state sensitivity to a control perturbation), and
//! * its adjoint `a_k = Σ_{j≥k} w^{[k,N-1]}_j H_oᵀ(t_j, t_k) ν_j`
//!   (back-propagation of a state-space density onto the controls).
//!
//! With trapezoid weights these are exact discrete adjoints of each other
//! under the full-horizon weighted inner product, which is what makes the
//! discrete descent identity `dJ/dτ = -k_tf (…)² - ∫ p_pcᵀ K p_pc` hold.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::lu_solve;
use crate::linearization::Linearization;
use crate::transition::TransitionTable;

/// Condition estimate above which `M` is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// State sensitivity `δx` induced by the control perturbation `du`.
pub fn impulse_response(table: &TransitionTable, grid: &TimeGrid, du: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let n = table.phi(0, 0).nrows();
    (0..grid.len())
        .map(|j| {
            let mut acc = DVector::zeros(n);
            for (k, duk) in du.iter().enumerate().take(j + 1) {
                let w = grid.weight(0, j, k);
                if w != 0.0 {
                    acc += table.ho(j, k) * duk * w;
                }
            }
            acc
        })
        .collect()
}

/// Adjoint of [`impulse_response`]: `a_k = ∫_{t_k}^{t_f} H_oᵀ(σ, t_k) ν(σ) dσ`.
pub fn adjoint_response(table: &TransitionTable, grid: &TimeGrid, nu: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let last = grid.len() - 1;
    let m = table.ho(0, 0).ncols();
    (0..grid.len())
        .map(|k| {
            let mut acc = DVector::zeros(m);
            for (j, nuj) in nu.iter().enumerate().skip(k) {
                let w = grid.weight(k, last, j);
                if w != 0.0 {
                    acc += table.ho(j, k).tr_mul(nuj) * w;
                }
            }
            acc
        })
        .collect()
}

/// Control gradient `p_u(t_i) = L_u + f_uᵀ φ_x + ∫_{t_i}^{t_f} H_oᵀ(σ, t_i)(L_x + φ_tx + φ_xxᵀ f + f_xᵀ φ_x) dσ`.
pub fn compute_pu(lin: &Linearization, table: &TransitionTable, grid: &TimeGrid) -> Vec<DVector<f64>> {
    let integrand: Vec<DVector<f64>> = lin.nodes.iter().map(|nd| nd.cost_rate_x.clone()).collect();
    let tail = adjoint_response(table, grid, &integrand);
    lin.nodes
        .iter()
        .zip(tail)
        .map(|(nd, a)| &nd.l_u + nd.f_u.tr_mul(&nd.phi_x) + a)
        .collect()
}

/// Control-space force of the path multipliers:
/// `C_uᵀ μ(t_i) + ∫_{t_i}^{t_f} H_oᵀ(s, t_i) C_xᵀ(s) μ(s) ds`.
pub fn constraint_force(lin: &Linearization, table: &TransitionTable, grid: &TimeGrid, mu: &[DVector<f64>]) -> Vec<DVector<f64>> {
    if lin.r == 0 {
        return vec![DVector::zeros(lin.m); lin.len()];
    }
    let state_density: Vec<DVector<f64>> = lin.nodes.iter().zip(mu).map(|(nd, m)| nd.c_x.tr_mul(m)).collect();
    let tail = adjoint_response(table, grid, &state_density);
    lin.nodes.iter().zip(mu).zip(tail).map(|((nd, m), a)| nd.c_u.tr_mul(m) + a).collect()
}

/// The terminal-multiplier linear system and its solution.
#[derive(Clone, Debug)]
pub struct PiSolution {
    /// `M`, q×q.
    pub m: DMatrix<f64>,
    pub h1: DVector<f64>,
    /// `r = h1 + g_xf ∫ h2 μ dt`.
    pub r: DVector<f64>,
    pub pi: DVector<f64>,
    pub condition: f64,
}

/// Controllability Gramian seen through the terminal constraint:
/// `M = g_xf (∫ H_o(t_f,t) K H_oᵀ(t_f,t) dt) g_xfᵀ + k_tf a aᵀ` with `a = g_xf f + g_tf`.
pub fn terminal_gramian(lin: &Linearization, table: &TransitionTable, grid: &TimeGrid, k: &DMatrix<f64>, k_tf: f64) -> DMatrix<f64> {
    let last = grid.len() - 1;
    let n = lin.n;
    let mut gram = DMatrix::zeros(n, n);
    for t in 0..grid.len() {
        let w = grid.weight(0, last, t);
        let h = table.ho(last, t);
        gram += h * k * h.transpose() * w;
    }
    let g = &lin.terminal.g_x;
    let a = &lin.terminal.g_rate;
    g * gram * g.transpose() + a * a.transpose() * k_tf
}

/// `h1 = g_xf ∫ H_o(t_f,t) K p_u dt + k_tf a (φ_t + φ_xᵀ f + L)|_{t_f}`.
pub fn terminal_drive(
    lin: &Linearization,
    table: &TransitionTable,
    grid: &TimeGrid,
    k: &DMatrix<f64>,
    k_tf: f64,
    pu: &[DVector<f64>],
    cost_rate: f64,
) -> DVector<f64> {
    let last = grid.len() - 1;
    let mut acc = DVector::zeros(lin.n);
    for (t, p) in pu.iter().enumerate() {
        let w = grid.weight(0, last, t);
        if w != 0.0 {
            acc += table.ho(last, t) * (k * p) * w;
        }
    }
    &lin.terminal.g_x * acc + &lin.terminal.g_rate * (k_tf * cost_rate)
}

/// `g_xf h2(t_j)`, a q×r block:
/// `g_xf [(∫_{t0}^{t_j} H_o(t_f,s) K H_oᵀ(t_j,s) ds) C_xᵀ(t_j) + H_o(t_f,t_j) K C_uᵀ(t_j)]`.
pub fn h2_projected(lin: &Linearization, table: &TransitionTable, grid: &TimeGrid, k: &DMatrix<f64>, j: usize) -> DMatrix<f64> {
    let last = grid.len() - 1;
    let mut inner = DMatrix::zeros(lin.n, lin.n);
    for s in 0..=j {
        let w = grid.weight(0, j, s);
        if w != 0.0 {
            inner += table.ho(last, s) * k * table.ho(j, s).transpose() * w;
        }
    }
    let nd = &lin.nodes[j];
    &lin.terminal.g_x * (inner * nd.c_x.transpose() + table.ho(last, j) * k * nd.c_u.transpose())
}

/// Solves `M π = -r` for the terminal Lagrange multiplier.
///
/// `mu` holds the path multipliers per node (all zeros is fine). For `q = 0`
/// the system is empty and `π` is the empty vector.
pub fn solve_pi(
    lin: &Linearization,
    table: &TransitionTable,
    grid: &TimeGrid,
    k: &DMatrix<f64>,
    k_tf: f64,
    pu: &[DVector<f64>],
    mu: &[DVector<f64>],
) -> Result<PiSolution> {
    let q = lin.q;
    if q == 0 {
        let empty = DVector::zeros(0);
        return Ok(PiSolution { m: DMatrix::zeros(0, 0), h1: empty.clone(), r: empty.clone(), pi: empty, condition: 1.0 });
    }
    let m = terminal_gramian(lin, table, grid, k, k_tf);
    let h1 = terminal_drive(lin, table, grid, k, k_tf, pu, lin.terminal.cost_rate);
    let mut r = h1.clone();
    let last = grid.len() - 1;
    for (j, mj) in mu.iter().enumerate() {
        if lin.r > 0 && mj.iter().any(|v| *v != 0.0) {
            r += h2_projected(lin, table, grid, k, j) * mj * grid.weight(0, last, j);
        }
    }
    let sol = lu_solve(&m, &(-&r), MAX_CONDITION).map_err(|condition| Error::Controllability { condition })?;
    Ok(PiSolution { m, h1, r, pi: sol.x, condition: sol.condition })
}

/// `p_u^pc(t_i) = p_u + H_oᵀ(t_f,t_i) g_xfᵀ π + C_uᵀ μ + ∫_{t_i}^{t_f} H_oᵀ(s,t_i) C_xᵀ μ ds`.
pub fn compute_pu_pc(
    lin: &Linearization,
    table: &TransitionTable,
    grid: &TimeGrid,
    pu: &[DVector<f64>],
    pi: &DVector<f64>,
    mu: &[DVector<f64>],
) -> Vec<DVector<f64>> {
    let last = grid.len() - 1;
    let force = constraint_force(lin, table, grid, mu);
    let terminal_pull = if lin.q > 0 { Some(lin.terminal.g_x.tr_mul(pi)) } else { None };
    (0..grid.len())
        .map(|i| {
            let mut p = &pu[i] + &force[i];
            if let Some(tp) = &terminal_pull {
                p += table.ho(last, i).tr_mul(tp);
            }
            p
        })
        .collect()
}

/// Left side of the terminal-time optimality condition,
/// `(φ_t + φ_xᵀ f + L + πᵀ(g_xf f + g_tf))|_{t_f}`.
pub fn transversality(lin: &Linearization, pi: &DVector<f64>) -> f64 {
    let mut v = lin.terminal.cost_rate;
    if lin.q > 0 {
        v += pi.dot(&lin.terminal.g_rate);
    }
    v
}

/// Costates recovered from states, controls and multipliers:
/// `λ(t_i) = φ_x + Φᵀ(t_f,t_i) g_xfᵀ π + ∫_{t_i}^{t_f} Φᵀ(σ,t_i)(L_x + C_xᵀ μ + φ_tx + φ_xxᵀ f + f_xᵀ φ_x) dσ`.
pub fn recover_costate(
    lin: &Linearization,
    table: &TransitionTable,
    grid: &TimeGrid,
    pi: &DVector<f64>,
    mu: &[DVector<f64>],
) -> Vec<DVector<f64>> {
    let last = grid.len() - 1;
    let terminal_pull = if lin.q > 0 { lin.terminal.g_x.tr_mul(pi) } else { DVector::zeros(lin.n) };
    let integrand: Vec<DVector<f64>> = lin
        .nodes
        .iter()
        .enumerate()
        .map(|(j, nd)| {
            let mut v = nd.cost_rate_x.clone();
            if lin.r > 0 {
                v += nd.c_x.tr_mul(&mu[j]);
            }
            v
        })
        .collect();
    (0..grid.len())
        .map(|i| {
            let mut lam = &lin.nodes[i].phi_x + table.phi(last, i).tr_mul(&terminal_pull);
            for (j, v) in integrand.iter().enumerate().skip(i) {
                let w = grid.weight(i, last, j);
                if w != 0.0 {
                    lam += table.phi(j, i).tr_mul(v) * w;
                }
            }
            lam
        })
        .collect()
}

/// Everything the control-rate row needs at one evolution state.
#[derive(Clone, Debug)]
pub struct GradientBundle {
    pub pu: Vec<DVector<f64>>,
    pub pi: PiSolution,
    pub pu_pc: Vec<DVector<f64>>,
}
