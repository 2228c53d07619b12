//! Variation-evolving solver for constrained optimal control.
//!
//! An optimal control problem is solved by evolving a feasible trajectory
//! along a virtual "variation time" `τ`. The evolution right-hand side is
//! built from costate-free first-order conditions: a control gradient that
//! accounts for the linearised dynamics through state-transition matrices,
//! a Lagrange multiplier vector for the terminal constraint and a KKT
//! multiplier profile for the path constraints. Once the evolution has
//! settled, classic costates can be recovered analytically from the same
//! quantities and used to cross-check the answer.
//!
//! The semi-discretised evolution system is an ordinary initial-value
//! problem, integrated with an adaptive Dormand–Prince 5(4) pair.
//!
//! ```no_run
//! use vem_core::builtin::example1;
//! use vem_core::evolution::solve;
//! use vem_core::init::solve_fssop;
//!
//! let ex = example1();
//! let init = solve_fssop(&ex.problem, ex.tf_guess, &ex.config, ex.fssop_cost.as_ref()).unwrap();
//! let out = solve(&ex.problem, init, &ex.config).unwrap();
//! println!("t_f = {:.4}", out.trajectory.tf());
//! ```

pub mod builtin;
pub mod config;
pub mod error;
pub mod evolution;
pub mod gradients;
pub mod grid;
pub mod init;
pub mod integrator;
pub mod linalg;
pub mod linearization;
pub mod multipliers;
pub mod problem;
pub mod trajectory;
pub mod transition;
pub mod verification;

pub use config::SolverConfig;
pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use problem::{ConstraintKind, OcpFunctions, OcpProblem, TerminalTime};
pub use trajectory::Trajectory;
