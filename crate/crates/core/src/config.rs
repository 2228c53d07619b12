use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{OcpFunctions, TerminalTime};

/// Gains, tolerances and discretisation settings for one solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Scalar control gain; `K = gain_k · I` unless `gain_matrix` is set.
    pub gain_k: f64,
    /// Full m×m control gain, row-major. Must be symmetric positive definite.
    pub gain_matrix: Option<Vec<Vec<f64>>>,
    /// Terminal-time gain `k_tf`. Ignored (treated as 0) for fixed terminal time.
    pub gain_tf: f64,
    /// Soft-barrier gain `k_C` pulling violated path constraints back to zero.
    pub barrier_kc: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Final variation time.
    pub tau_end: f64,
    pub grid_points: usize,
    /// Path constraint `i` is a candidate at a node when `C_i ≥ -active_tol`.
    /// Candidates just inside the boundary get the barrier too, which only
    /// ever slows their approach; this keeps discrete steps from overshooting.
    pub active_tol: f64,
    /// Inequality multipliers below `-sign_tol` leave the working set.
    pub sign_tol: f64,
    /// Stop once `‖p_u^pc‖_∞` and the transversality residual fall below this.
    pub residual_tol: f64,
    /// Re-propagate states from the controls every this many accepted steps.
    /// `None` disables restoration.
    pub repropagate_every: Option<usize>,
    /// Transport state rates to the moving grid nodes as `t_f` evolves.
    pub node_motion: bool,
    /// Tikhonov coefficient added to the multiplier system diagonal.
    pub tikhonov: f64,
    pub max_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gain_k: 0.1,
            gain_matrix: None,
            gain_tf: 0.1,
            barrier_kc: 0.1,
            rtol: 1e-3,
            atol: 1e-6,
            tau_end: 300.0,
            grid_points: 41,
            active_tol: 1e-2,
            sign_tol: 1e-10,
            residual_tol: 1e-3,
            repropagate_every: Some(10),
            node_motion: true,
            tikhonov: 0.0,
            max_steps: 200_000,
        }
    }
}

impl SolverConfig {
    /// The m×m gain matrix `K`.
    pub fn gain(&self, m: usize) -> DMatrix<f64> {
        match &self.gain_matrix {
            Some(rows) => DMatrix::from_fn(m, m, |i, j| rows.get(i).and_then(|r| r.get(j)).copied().unwrap_or(f64::NAN)),
            None => DMatrix::identity(m, m) * self.gain_k,
        }
    }

    /// `k_tf` as actually used: zero when the terminal time is fixed.
    pub fn effective_gain_tf<P: OcpFunctions + ?Sized>(&self, p: &P) -> f64 {
        match p.terminal_time() {
            TerminalTime::Free => self.gain_tf,
            TerminalTime::Fixed(_) => 0.0,
        }
    }

    pub fn validate<P: OcpFunctions + ?Sized>(&self, p: &P) -> Result<()> {
        let m = p.control_dim();
        if let Some(rows) = &self.gain_matrix {
            if rows.len() != m || rows.iter().any(|r| r.len() != m) {
                return Err(Error::Config(format!("gain matrix must be {m}x{m}")));
            }
        }
        let k = self.gain(m);
        if (&k - k.transpose()).amax() > 1e-12 * (1.0 + k.amax()) || k.clone().cholesky().is_none() {
            return Err(Error::Config("gain matrix K must be symmetric positive definite".into()));
        }
        let positive = [
            ("rtol", self.rtol),
            ("atol", self.atol),
            ("tau_end", self.tau_end),
            ("active_tol", self.active_tol),
            ("sign_tol", self.sign_tol),
            ("residual_tol", self.residual_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.gain_tf < 0.0 || self.barrier_kc < 0.0 || self.tikhonov < 0.0 {
            return Err(Error::Config("gain_tf, barrier_kc and tikhonov must be nonnegative".into()));
        }
        if matches!(p.terminal_time(), TerminalTime::Free) && self.gain_tf == 0.0 {
            return Err(Error::Config("free terminal time needs gain_tf > 0".into()));
        }
        if self.grid_points < 3 {
            return Err(Error::Config("grid_points must be at least 3".into()));
        }
        if self.repropagate_every == Some(0) {
            return Err(Error::Config("repropagate_every must be at least 1".into()));
        }
        Ok(())
    }
}
