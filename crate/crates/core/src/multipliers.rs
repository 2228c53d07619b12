//! KKT multipliers of the path constraints.
//!
//! On the working set of active nodes the multipliers make the linearised
//! constraint rate obey the soft barrier `δC_i/δτ + k_C C_i = 0`, with `π`
//! eliminated through the terminal system. The resulting dense system is the
//! trapezoid discretisation of the multiplier integral equation: its rows
//! carry the `C_u K C_uᵀ` leading term, the full-horizon kernel that enters
//! through `π`, the left and right kernels of the state response, and the
//! drive term with the barrier.
//!
//! Rather than tabulating each kernel separately, a column is assembled as
//! the constraint-rate response to a unit multiplier at one active node.
//! This is algebraically the same system and keeps it consistent, to
//! roundoff, with the control rate the evolution actually applies.
//!
//! Inactive multipliers are dropped by sign: an inequality node whose
//! multiplier comes out negative leaves the working set and the reduced
//! system is re-solved.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gradients::{self, PiSolution, MAX_CONDITION};
use crate::grid::TimeGrid;
use crate::linalg::lu_solve;
use crate::linearization::Linearization;
use crate::transition::TransitionTable;

/// Condition estimate above which the multiplier system is reported singular.
pub const MAX_MULTIPLIER_CONDITION: f64 = 1e14;

/// Gains entering the multiplier system.
#[derive(Clone, Debug)]
pub struct MultiplierGains {
    pub k: DMatrix<f64>,
    pub k_tf: f64,
    pub k_c: f64,
    pub active_tol: f64,
    pub sign_tol: f64,
    pub tikhonov: f64,
}

#[derive(Clone, Debug)]
pub struct MultiplierState {
    /// `μ(t_j)` as an r-vector per node; zero off the active set.
    pub mu: Vec<DVector<f64>>,
    /// Sorted active node indices, per constraint.
    pub active: Vec<Vec<usize>>,
    /// Terminal multiplier solved with this `μ`.
    pub pi: PiSolution,
    /// Working-set passes taken.
    pub iterations: usize,
}

impl MultiplierState {
    pub fn pi(&self) -> &DVector<f64> {
        &self.pi.pi
    }
}

/// Candidate nodes per constraint: `C_i ≥ -active_tol` for inequalities, every node for equalities.
pub fn detect_candidates(lin: &Linearization, active_tol: f64) -> Vec<Vec<usize>> {
    (0..lin.r)
        .map(|i| {
            if lin.kinds[i].is_inequality() {
                (0..lin.len()).filter(|&j| lin.nodes[j].c[i] >= -active_tol).collect()
            } else {
                (0..lin.len()).collect()
            }
        })
        .collect()
}

/// Dense system `A μ = b` over the stacked unknowns `(constraint, node)`.
#[derive(Clone, Debug)]
pub struct MuSystem {
    pub unknowns: Vec<(usize, usize)>,
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    /// Candidates whose constraint rate cannot be influenced at all
    /// (e.g. a pure-state constraint at the initial node); left at `μ = 0`.
    pub uncontrollable: Vec<(usize, usize)>,
}

/// Control rate `-K(q + H_oᵀ(t_f,·) g_xfᵀ π_q)` where `π_q` keeps `δg = 0`
/// for the control force `q` alone (no terminal-time drive).
struct TerminalProjector {
    m_inv: Option<DMatrix<f64>>,
}

impl TerminalProjector {
    fn new(lin: &Linearization, table: &TransitionTable, grid: &TimeGrid, gains: &MultiplierGains) -> Result<Self> {
        if lin.q == 0 {
            return Ok(Self { m_inv: None });
        }
        let m = gradients::terminal_gramian(lin, table, grid, &gains.k, gains.k_tf);
        lu_solve(&m, &DVector::zeros(lin.q), MAX_CONDITION).map_err(|condition| Error::Controllability { condition })?;
        let inv = m.try_inverse().ok_or(Error::Controllability { condition: f64::INFINITY })?;
        Ok(Self { m_inv: Some(inv) })
    }

    fn control_rate(&self, lin: &Linearization, table: &TransitionTable, grid: &TimeGrid, k: &DMatrix<f64>, force: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let last = grid.len() - 1;
        let pull = self.m_inv.as_ref().map(|m_inv| {
            let mut acc = DVector::zeros(lin.n);
            for (t, f) in force.iter().enumerate() {
                let w = grid.weight(0, last, t);
                if w != 0.0 && f.iter().any(|v| *v != 0.0) {
                    acc += table.ho(last, t) * (k * f) * w;
                }
            }
            let pi = -(m_inv * (&lin.terminal.g_x * acc));
            lin.terminal.g_x.tr_mul(&pi)
        });
        force
            .iter()
            .enumerate()
            .map(|(t, f)| {
                let mut p = f.clone();
                if let Some(pull) = &pull {
                    p += table.ho(last, t).tr_mul(pull);
                }
                -(k * p)
            })
            .collect()
    }
}

/// Linear functional `du ↦ δC_i(t_j)` stored as one m-vector per node.
fn rate_functional(lin: &Linearization, table: &TransitionTable, grid: &TimeGrid, i: usize, j: usize) -> Vec<DVector<f64>> {
    let nd = &lin.nodes[j];
    let cx_row = nd.c_x.row(i);
    let mut coef: Vec<DVector<f64>> = (0..grid.len())
        .map(|k| {
            let w = grid.weight(0, j, k);
            if w == 0.0 {
                DVector::zeros(lin.m)
            } else {
                (cx_row * table.ho(j, k)).transpose() * w
            }
        })
        .collect();
    coef[j] += nd.c_u.row(i).transpose();
    coef
}

fn apply(coef: &[DVector<f64>], du: &[DVector<f64>]) -> f64 {
    coef.iter().zip(du).map(|(c, d)| c.dot(d)).sum()
}

/// Assembles the multiplier system over `candidates`.
pub fn assemble_mu_system(
    lin: &Linearization,
    table: &TransitionTable,
    grid: &TimeGrid,
    pu: &[DVector<f64>],
    candidates: &[Vec<usize>],
    gains: &MultiplierGains,
) -> Result<MuSystem> {
    let last = grid.len() - 1;
    let mut rows = Vec::new();
    let mut unknowns = Vec::new();
    let mut uncontrollable = Vec::new();
    for (i, nodes) in candidates.iter().enumerate() {
        for &j in nodes {
            let coef = rate_functional(lin, table, grid, i, j);
            if coef.iter().any(|c| c.iter().any(|v| !v.is_finite())) {
                return Err(Error::KernelAssembly { constraint: i, node: j });
            }
            if coef.iter().all(|c| c.iter().all(|v| *v == 0.0)) {
                uncontrollable.push((i, j));
                continue;
            }
            rows.push(coef);
            unknowns.push((i, j));
        }
    }
    let size = unknowns.len();
    if size == 0 {
        return Ok(MuSystem { unknowns, matrix: DMatrix::zeros(0, 0), rhs: DVector::zeros(0), uncontrollable });
    }

    let projector = TerminalProjector::new(lin, table, grid, gains)?;

    // Control rate with μ = 0, including the terminal-time drive through π.
    let pi0 = gradients::solve_pi(lin, table, grid, &gains.k, gains.k_tf, pu, &vec![DVector::zeros(lin.r); grid.len()])?;
    let du0: Vec<DVector<f64>> = gradients::compute_pu_pc(lin, table, grid, pu, &pi0.pi, &vec![DVector::zeros(lin.r); grid.len()])
        .iter()
        .map(|p| -(&gains.k * p))
        .collect();

    let mut matrix = DMatrix::zeros(size, size);
    let mut rhs = DVector::zeros(size);
    for (row, (&(i, j), coef)) in unknowns.iter().zip(&rows).enumerate() {
        rhs[row] = apply(coef, &du0) + gains.k_c * lin.nodes[j].c[i];
    }

    for (col, &(i, j)) in unknowns.iter().enumerate() {
        // Control force of a unit multiplier on constraint i at node j.
        let nd = &lin.nodes[j];
        let cx_row = nd.c_x.row(i).transpose();
        let mut force: Vec<DVector<f64>> = (0..grid.len())
            .map(|k| {
                let w = grid.weight(k, last, j);
                if k > j || w == 0.0 {
                    DVector::zeros(lin.m)
                } else {
                    table.ho(j, k).tr_mul(&cx_row) * w
                }
            })
            .collect();
        force[j] += nd.c_u.row(i).transpose();
        let du = projector.control_rate(lin, table, grid, &gains.k, &force);
        for (row, coef) in rows.iter().enumerate() {
            matrix[(row, col)] = -apply(coef, &du);
        }
        if matrix.column(col).iter().any(|v| !v.is_finite()) {
            return Err(Error::KernelAssembly { constraint: i, node: j });
        }
    }
    if gains.tikhonov > 0.0 {
        for d in 0..size {
            matrix[(d, d)] += gains.tikhonov;
        }
    }
    Ok(MuSystem { unknowns, matrix, rhs, uncontrollable })
}

/// Working-set solve for `μ`, followed by `π` from the terminal system.
pub fn solve_mu(
    lin: &Linearization,
    table: &TransitionTable,
    grid: &TimeGrid,
    pu: &[DVector<f64>],
    gains: &MultiplierGains,
) -> Result<MultiplierState> {
    let candidates = detect_candidates(lin, gains.active_tol);
    let system = assemble_mu_system(lin, table, grid, pu, &candidates, gains)?;

    let mut keep: Vec<usize> = (0..system.unknowns.len()).collect();
    let cap = (lin.r * grid.len()).max(1);
    let mut iterations = 0;
    let mut values = DVector::zeros(0);
    while !keep.is_empty() {
        if iterations >= cap {
            return Err(Error::ActiveSetNonConvergent { iterations });
        }
        iterations += 1;
        let a = system.matrix.select_rows(&keep).select_columns(&keep);
        let b = system.rhs.select_rows(&keep);
        let sol = lu_solve(&a, &b, MAX_MULTIPLIER_CONDITION).map_err(|condition| Error::MultiplierSolve {
            condition,
            active: keep.iter().map(|&e| system.unknowns[e]).collect(),
        })?;
        let next: Vec<usize> = keep
            .iter()
            .zip(sol.x.iter())
            .filter(|(&e, &v)| !(lin.kinds[system.unknowns[e].0].is_inequality() && v < -gains.sign_tol))
            .map(|(&e, _)| e)
            .collect();
        if next.len() == keep.len() {
            values = sol.x;
            break;
        }
        keep = next;
    }

    let mut mu = vec![DVector::zeros(lin.r); grid.len()];
    let mut active = vec![Vec::new(); lin.r];
    for (slot, &e) in keep.iter().enumerate() {
        let (i, j) = system.unknowns[e];
        mu[j][i] = values[slot];
        active[i].push(j);
    }
    for list in &mut active {
        list.sort_unstable();
    }
    let pi = gradients::solve_pi(lin, table, grid, &gains.k, gains.k_tf, pu, &mu)?;
    Ok(MultiplierState { mu, active, pi, iterations })
}
