//! Optimality certificates and independent cross-checks.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::evolution::evolution_rhs;
use crate::gradients;
use crate::linearization::Linearization;
use crate::problem::{OcpProblem, TerminalTime};
use crate::trajectory::Trajectory;
use crate::transition::TransitionTable;

/// Number of random directions used by [`fd_gradient_check`].
pub const FD_DIRECTIONS: usize = 5;
/// Perturbation size used by [`fd_gradient_check`].
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OptimalityResiduals {
    /// `max_t ‖p_u^pc(t)‖_∞`.
    pub pu_pc_inf: f64,
    /// `|φ_t + φ_xᵀf + L + πᵀ(g_xf f + g_tf)|` at `t_f`; zero for fixed `t_f`.
    pub transversality: f64,
}

/// Costate-free residuals for given multipliers.
pub fn optimality_residuals<P: OcpProblem + ?Sized>(p: &P, traj: &Trajectory, pi: &DVector<f64>, mu: &[DVector<f64>]) -> Result<OptimalityResiduals> {
    let lin = Linearization::new(p, traj)?;
    let table = TransitionTable::build(p, traj, &lin)?;
    let pu = gradients::compute_pu(&lin, &table, &traj.grid);
    let mu = padded_mu(&lin, mu);
    let pu_pc = gradients::compute_pu_pc(&lin, &table, &traj.grid, &pu, pi, &mu);
    let transversality = match p.terminal_time() {
        TerminalTime::Free => gradients::transversality(&lin, pi).abs(),
        TerminalTime::Fixed(_) => 0.0,
    };
    Ok(OptimalityResiduals { pu_pc_inf: pu_pc.iter().map(|v| v.amax()).fold(0.0, f64::max), transversality })
}

fn padded_mu(lin: &Linearization, mu: &[DVector<f64>]) -> Vec<DVector<f64>> {
    if mu.len() == lin.len() && mu.iter().all(|m| m.len() == lin.r) {
        mu.to_vec()
    } else {
        vec![DVector::zeros(lin.r); lin.len()]
    }
}

/// Sup-norm residuals of the classic first-order conditions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClassicResiduals {
    /// `λ̇ + L_x + f_xᵀλ + C_xᵀμ`, with `λ̇` by finite differences.
    pub costate_dynamics: f64,
    /// `L_u + f_uᵀλ + C_uᵀμ`.
    pub stationarity: f64,
    /// `(L + λᵀf + φ_t + πᵀg_t)` at `t_f`; zero for fixed `t_f`.
    pub transversality: f64,
    /// `λ(t_f) − φ_x − g_xfᵀπ`.
    pub terminal_costate: f64,
    /// Worst of `max(−μ, 0)` and `|μ C|` over inequality constraints.
    pub complementarity: f64,
}

pub fn classic_residuals<P: OcpProblem + ?Sized>(
    p: &P,
    traj: &Trajectory,
    lambda: &[DVector<f64>],
    pi: &DVector<f64>,
    mu: &[DVector<f64>],
) -> Result<ClassicResiduals> {
    let lin = Linearization::new(p, traj)?;
    if lambda.len() != traj.len() {
        return Err(Error::Dimension(format!("{} costates for {} nodes", lambda.len(), traj.len())));
    }
    let mu = padded_mu(&lin, mu);
    let last = traj.last();
    let times = traj.grid.times();

    let mut costate_dynamics = 0.0f64;
    let mut stationarity = 0.0f64;
    let mut complementarity = 0.0f64;
    for (i, nd) in lin.nodes.iter().enumerate() {
        let rate = if i == 0 {
            (&lambda[1] - &lambda[0]) / (times[1] - times[0])
        } else if i == last {
            (&lambda[last] - &lambda[last - 1]) / (times[last] - times[last - 1])
        } else {
            (&lambda[i + 1] - &lambda[i - 1]) / (times[i + 1] - times[i - 1])
        };
        let mut ode = rate + &nd.l_x + nd.f_x.tr_mul(&lambda[i]);
        let mut h_u = &nd.l_u + nd.f_u.tr_mul(&lambda[i]);
        if lin.r > 0 {
            ode += nd.c_x.tr_mul(&mu[i]);
            h_u += nd.c_u.tr_mul(&mu[i]);
            for (k, kind) in lin.kinds.iter().enumerate() {
                if kind.is_inequality() {
                    complementarity = complementarity.max((-mu[i][k]).max(0.0)).max((mu[i][k] * nd.c[k]).abs());
                }
            }
        }
        costate_dynamics = costate_dynamics.max(ode.amax());
        stationarity = stationarity.max(h_u.amax());
    }

    let (xf, tf) = (&traj.x[last], traj.tf());
    let end = &lin.nodes[last];
    let mut terminal = &lambda[last] - &end.phi_x;
    let mut transversality = end.l + lambda[last].dot(&end.f) + p.phi_t(xf, tf);
    if lin.q > 0 {
        terminal -= lin.terminal.g_x.tr_mul(pi);
        transversality += pi.dot(&lin.terminal.g_t);
    }
    if matches!(p.terminal_time(), TerminalTime::Fixed(_)) {
        transversality = 0.0;
    }
    Ok(ClassicResiduals {
        costate_dynamics,
        stationarity,
        transversality: transversality.abs(),
        terminal_costate: terminal.amax(),
        complementarity,
    })
}

/// Worst relative mismatch between the directional derivative `∫ p_uᵀ v dt`
/// and a forward difference of the cost, over random smooth bumps `v`.
///
/// Only meaningful for problems without terminal or path constraints and
/// with a fixed terminal time.
pub fn fd_gradient_check<P: OcpProblem + ?Sized>(p: &P, traj: &Trajectory, seed: u64) -> Result<f64> {
    if p.terminal_dim() != 0 || p.path_dim() != 0 || !matches!(p.terminal_time(), TerminalTime::Fixed(_)) {
        return Err(Error::Config("gradient check needs an unconstrained fixed-horizon problem".into()));
    }
    let mut base = traj.clone();
    base.propagate(p)?;
    let lin = Linearization::new(p, &base)?;
    let table = TransitionTable::build(p, &base, &lin)?;
    let pu = gradients::compute_pu(&lin, &table, &base.grid);
    let j0 = base.cost(p);
    let times = base.grid.times();
    let span = base.tf() - base.grid.t0();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..FD_DIRECTIONS {
        let m = p.control_dim();
        let centres: Vec<f64> = (0..m).map(|_| base.grid.t0() + span * rng.random_range(0.1..0.9)).collect();
        let widths: Vec<f64> = (0..m).map(|_| span * rng.random_range(0.1..0.3)).collect();
        let amps: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..1.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let dir: Vec<DVector<f64>> = times
            .iter()
            .map(|&t| DVector::from_fn(m, |c, _| amps[c] * (-((t - centres[c]) / widths[c]).powi(2)).exp()))
            .collect();

        let products: Vec<f64> = pu.iter().zip(&dir).map(|(g, d)| g.dot(d)).collect();
        let analytic = base.grid.quad(&products, 0, base.last())?;
        let mut bumped = base.clone();
        for (u, d) in bumped.u.iter_mut().zip(&dir) {
            *u += d * FD_STEP;
        }
        bumped.propagate(p)?;
        let numeric = (bumped.cost(p) - j0) / FD_STEP;
        let scale = analytic.abs().max(numeric.abs());
        let err = if scale < 1e-12 { (analytic - numeric).abs() } else { (analytic - numeric).abs() / scale };
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Residuals of the rate conditions the multipliers are solved from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateResiduals {
    /// `max |δC_i/δτ + k_C C_i|` over the active set, relative to the largest assembled term.
    pub constraint: f64,
    /// `‖δg/δτ‖_∞` relative to the largest assembled term.
    pub terminal: f64,
    /// Number of active `(constraint, node)` pairs.
    pub active: usize,
}

/// Substitutes the solved `(μ, π)` back into the linearised constraint rates.
pub fn constraint_rate_residuals<P: OcpProblem + ?Sized>(p: &P, traj: &Trajectory, cfg: &SolverConfig) -> Result<RateResiduals> {
    let eval = evolution_rhs(p, traj, cfg)?;
    let grid = &traj.grid;
    let du = &eval.control_rate;
    let dx = gradients::impulse_response(&eval.table, grid, du);

    let mut worst = 0.0f64;
    let mut scale = f64::MIN_POSITIVE;
    let mut active = 0;
    for (i, nodes) in eval.multipliers.active.iter().enumerate() {
        for &j in nodes {
            let nd = &eval.lin.nodes[j];
            let state_part = nd.c_x.row(i).dot(&dx[j].transpose());
            let control_part = nd.c_u.row(i).dot(&du[j].transpose());
            let barrier = cfg.barrier_kc * nd.c[i];
            worst = worst.max((state_part + control_part + barrier).abs());
            scale = scale.max(state_part.abs()).max(control_part.abs()).max(barrier.abs());
            active += 1;
        }
    }

    let last = grid.len() - 1;
    let mut terminal = 0.0;
    if eval.lin.q > 0 {
        let moved = &eval.lin.terminal.g_x * &dx[last];
        let drift = &eval.lin.terminal.g_rate * eval.rates.dtf;
        let t_scale = moved.amax().max(drift.amax()).max(f64::MIN_POSITIVE);
        terminal = (moved + drift).amax() / t_scale;
    }
    Ok(RateResiduals { constraint: worst / scale, terminal, active })
}
