use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("quadrature range {from}..={to} out of bounds for {len} nodes")]
    QuadRange { from: usize, to: usize, len: usize },

    #[error("callback `{callback}` returned a non-finite value")]
    Evaluation { callback: &'static str },

    #[error("non-finite linearisation at node {node}")]
    Assembly { node: usize },

    #[error("terminal multiplier system is singular or ill-conditioned (condition estimate {condition:e})")]
    Controllability { condition: f64 },

    #[error("multiplier system for constraint {constraint} at node {node} has a non-finite entry")]
    KernelAssembly { constraint: usize, node: usize },

    #[error("KKT multiplier system is singular (condition estimate {condition:e}, active set {active:?})")]
    MultiplierSolve { condition: f64, active: Vec<(usize, usize)> },

    #[error("active-set iteration did not settle after {iterations} passes")]
    ActiveSetNonConvergent { iterations: usize },

    #[error("state propagation produced a non-finite value at node {node}")]
    Propagation { node: usize },

    #[error("evolution rate is non-finite at node {node}")]
    NonFiniteRate { node: usize },

    #[error("step size underflow at tau = {tau} (h = {step:e})")]
    StepUnderflow { tau: f64, step: f64 },

    #[error("initial trajectory is infeasible: {0}")]
    InfeasibleInit(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),
}
