//! Shipped test problems with their settings and reference solutions.

use nalgebra::{DMatrix, DVector};

use crate::config::SolverConfig;
use crate::error::Result;
use crate::init::{solve_fssop, straight_line_init, ClosedForm, FssopCost};
use crate::problem::{ConstraintKind, OcpFunctions, OcpProblem, TerminalTime};
use crate::trajectory::Trajectory;

fn v(values: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(values)
}

fn m(rows: usize, cols: usize, values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, values)
}

/// Minimum-time transfer of a double integrator to the origin, `|u| ≤ 1`
/// written as `u² − 1 ≤ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct MinTimeDoubleIntegrator {
    pub x0: [f64; 2],
    pub terminal_time: TerminalTime,
}

impl Default for MinTimeDoubleIntegrator {
    fn default() -> Self {
        Self { x0: [1.0, 1.0], terminal_time: TerminalTime::Free }
    }
}

impl OcpFunctions for MinTimeDoubleIntegrator {
    fn state_dim(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn terminal_dim(&self) -> usize {
        2
    }
    fn path_dim(&self) -> usize {
        1
    }
    fn x0(&self) -> DVector<f64> {
        v(&self.x0)
    }
    fn terminal_time(&self) -> TerminalTime {
        self.terminal_time
    }
    fn constraint_kinds(&self) -> Vec<ConstraintKind> {
        vec![ConstraintKind::PureControl]
    }
    fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>, _t: f64) -> DVector<f64> {
        v(&[x[1], u[0]])
    }
    fn terminal_cost(&self, _x: &DVector<f64>, t: f64) -> f64 {
        t
    }
    fn terminal_constraint(&self, x: &DVector<f64>, _t: f64) -> DVector<f64> {
        x.clone()
    }
    fn path_constraint(&self, _x: &DVector<f64>, u: &DVector<f64>, _t: f64) -> DVector<f64> {
        v(&[u[0] * u[0] - 1.0])
    }
}

impl OcpProblem for MinTimeDoubleIntegrator {
    fn f_x(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        m(2, 2, &[0.0, 1.0, 0.0, 0.0])
    }
    fn f_u(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        m(2, 1, &[0.0, 1.0])
    }
    fn l_x(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DVector<f64> {
        DVector::zeros(2)
    }
    fn l_u(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DVector<f64> {
        DVector::zeros(1)
    }
    fn phi_x(&self, _x: &DVector<f64>, _t: f64) -> DVector<f64> {
        DVector::zeros(2)
    }
    fn phi_t(&self, _x: &DVector<f64>, _t: f64) -> f64 {
        1.0
    }
    fn phi_xx(&self, _x: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        DMatrix::zeros(2, 2)
    }
    fn phi_tx(&self, _x: &DVector<f64>, _t: f64) -> DVector<f64> {
        DVector::zeros(2)
    }
    fn g_x(&self, _x: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        DMatrix::identity(2, 2)
    }
    fn g_t(&self, _x: &DVector<f64>, _t: f64) -> DVector<f64> {
        DVector::zeros(2)
    }
    fn c_x(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        DMatrix::zeros(1, 2)
    }
    fn c_u(&self, _x: &DVector<f64>, u: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        m(1, 1, &[2.0 * u[0]])
    }
}

/// Fastest descent to `x = target_x` with the position kept above a slope,
/// `C = −0.5x − y − 0.35 ≤ 0`. States are `(x, y, V)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstrainedBrachistochrone {
    pub gravity: f64,
    pub target_x: f64,
    pub slope: f64,
    pub offset: f64,
    pub terminal_time: TerminalTime,
}

impl Default for ConstrainedBrachistochrone {
    fn default() -> Self {
        Self { gravity: 10.0, target_x: 2.0, slope: 0.5, offset: 0.35, terminal_time: TerminalTime::Free }
    }
}

impl OcpFunctions for ConstrainedBrachistochrone {
    fn state_dim(&self) -> usize {
        3
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn terminal_dim(&self) -> usize {
        1
    }
    fn path_dim(&self) -> usize {
        1
    }
    fn x0(&self) -> DVector<f64> {
        DVector::zeros(3)
    }
    fn terminal_time(&self) -> TerminalTime {
        self.terminal_time
    }
    fn constraint_kinds(&self) -> Vec<ConstraintKind> {
        vec![ConstraintKind::PureState]
    }
    fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>, _t: f64) -> DVector<f64> {
        let (s, c) = u[0].sin_cos();
        v(&[x[2] * s, -x[2] * c, self.gravity * c])
    }
    fn terminal_cost(&self, _x: &DVector<f64>, t: f64) -> f64 {
        t
    }
    fn terminal_constraint(&self, x: &DVector<f64>, _t: f64) -> DVector<f64> {
        v(&[x[0] - self.target_x])
    }
    fn path_constraint(&self, x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DVector<f64> {
        v(&[-self.slope * x[0] - x[1] - self.offset])
    }
}

impl OcpProblem for ConstrainedBrachistochrone {
    fn f_x(&self, _x: &DVector<f64>, u: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        let (s, c) = u[0].sin_cos();
        m(3, 3, &[0.0, 0.0, s, 0.0, 0.0, -c, 0.0, 0.0, 0.0])
    }
    fn f_u(&self, x: &DVector<f64>, u: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        let (s, c) = u[0].sin_cos();
        m(3, 1, &[x[2] * c, x[2] * s, -self.gravity * s])
    }
    fn l_x(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DVector<f64> {
        DVector::zeros(3)
    }
    fn l_u(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DVector<f64> {
        DVector::zeros(1)
    }
    fn phi_x(&self, _x: &DVector<f64>, _t: f64) -> DVector<f64> {
        DVector::zeros(3)
    }
    fn phi_t(&self, _x: &DVector<f64>, _t: f64) -> f64 {
        1.0
    }
    fn phi_xx(&self, _x: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        DMatrix::zeros(3, 3)
    }
    fn phi_tx(&self, _x: &DVector<f64>, _t: f64) -> DVector<f64> {
        DVector::zeros(3)
    }
    fn g_x(&self, _x: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        m(1, 3, &[1.0, 0.0, 0.0])
    }
    fn g_t(&self, _x: &DVector<f64>, _t: f64) -> DVector<f64> {
        DVector::zeros(1)
    }
    fn c_x(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        m(1, 3, &[-self.slope, -1.0, 0.0])
    }
    fn c_u(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        DMatrix::zeros(1, 1)
    }
}

/// Double integrator with `L = ½u²` and `φ = ½‖x(t_f)‖²` on a fixed horizon;
/// unconstrained, so the control gradient can be checked by finite differences.
#[derive(Clone, Debug, PartialEq)]
pub struct LqDoubleIntegrator {
    pub x0: [f64; 2],
    pub tf: f64,
}

impl Default for LqDoubleIntegrator {
    fn default() -> Self {
        Self { x0: [1.0, 0.0], tf: 1.0 }
    }
}

impl OcpFunctions for LqDoubleIntegrator {
    fn state_dim(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn x0(&self) -> DVector<f64> {
        v(&self.x0)
    }
    fn terminal_time(&self) -> TerminalTime {
        TerminalTime::Fixed(self.tf)
    }
    fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>, _t: f64) -> DVector<f64> {
        v(&[x[1], u[0]])
    }
    fn running_cost(&self, _x: &DVector<f64>, u: &DVector<f64>, _t: f64) -> f64 {
        0.5 * u[0] * u[0]
    }
    fn terminal_cost(&self, x: &DVector<f64>, _t: f64) -> f64 {
        0.5 * x.norm_squared()
    }
}

impl OcpProblem for LqDoubleIntegrator {
    fn f_x(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        m(2, 2, &[0.0, 1.0, 0.0, 0.0])
    }
    fn f_u(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        m(2, 1, &[0.0, 1.0])
    }
    fn l_x(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DVector<f64> {
        DVector::zeros(2)
    }
    fn l_u(&self, _x: &DVector<f64>, u: &DVector<f64>, _t: f64) -> DVector<f64> {
        u.clone()
    }
    fn phi_x(&self, x: &DVector<f64>, _t: f64) -> DVector<f64> {
        x.clone()
    }
    fn phi_t(&self, _x: &DVector<f64>, _t: f64) -> f64 {
        0.0
    }
    fn phi_xx(&self, _x: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        DMatrix::identity(2, 2)
    }
    fn phi_tx(&self, _x: &DVector<f64>, _t: f64) -> DVector<f64> {
        DVector::zeros(2)
    }
    fn g_x(&self, _x: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        DMatrix::zeros(0, 2)
    }
    fn g_t(&self, _x: &DVector<f64>, _t: f64) -> DVector<f64> {
        DVector::zeros(0)
    }
    fn c_x(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        DMatrix::zeros(0, 2)
    }
    fn c_u(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        DMatrix::zeros(0, 1)
    }
}

/// Closed-form optimal solution.
#[derive(Clone, Copy, Debug)]
pub struct AnalyticOracle {
    pub tf: f64,
    pub switch_times: &'static [f64],
    pub state: fn(f64) -> DVector<f64>,
    pub control: fn(f64) -> DVector<f64>,
    pub costate: fn(f64) -> DVector<f64>,
    /// Terminal multiplier `π`.
    pub pi: fn() -> DVector<f64>,
}

const SQRT6: f64 = 2.449_489_742_783_178;
pub const EXAMPLE1_TF: f64 = 1.0 + SQRT6;
pub const EXAMPLE1_SWITCH: f64 = 1.0 + SQRT6 / 2.0;

fn ex1_state(t: f64) -> DVector<f64> {
    if t < EXAMPLE1_SWITCH {
        v(&[-0.5 * t * t + t + 1.0, 1.0 - t])
    } else {
        let s = t - EXAMPLE1_TF;
        v(&[0.5 * s * s, s])
    }
}

fn ex1_control(t: f64) -> DVector<f64> {
    v(&[if t < EXAMPLE1_SWITCH { -1.0 } else { 1.0 }])
}

fn ex1_costate(t: f64) -> DVector<f64> {
    let a = SQRT6 / 3.0;
    v(&[a, -a * t + a + 1.0])
}

fn ex1_pi() -> DVector<f64> {
    v(&[SQRT6 / 3.0, -1.0])
}

pub struct Example1 {
    pub problem: MinTimeDoubleIntegrator,
    pub config: SolverConfig,
    pub tf_guess: f64,
    pub fssop_cost: Option<FssopCost>,
    pub oracle: AnalyticOracle,
}

pub fn example1() -> Example1 {
    Example1 {
        problem: MinTimeDoubleIntegrator::default(),
        config: SolverConfig {
            gain_k: 0.2,
            gain_tf: 0.1,
            barrier_kc: 0.1,
            grid_points: 41,
            tau_end: 300.0,
            rtol: 1e-3,
            atol: 1e-6,
            ..SolverConfig::default()
        },
        tf_guess: 8.0,
        fssop_cost: Some(FssopCost::ControlEnergy),
        oracle: AnalyticOracle {
            tf: EXAMPLE1_TF,
            switch_times: &[EXAMPLE1_SWITCH],
            state: ex1_state,
            control: ex1_control,
            costate: ex1_costate,
            pi: ex1_pi,
        },
    }
}

/// Published values for the constrained Brachistochrone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Example2Reference {
    /// Terminal time reached by the evolution in the original study.
    pub tf: f64,
    /// Terminal time from an independent direct solver.
    pub tf_external: f64,
    /// `x` range over which the slope constraint is active.
    pub active_arc: (f64, f64),
}

pub struct Example2 {
    pub problem: ConstrainedBrachistochrone,
    pub config: SolverConfig,
    pub initializer: ClosedForm,
    pub reference: Example2Reference,
}

/// Constant-heading slide along the chord to `(2, −1)` in one second.
pub fn straight_line_slide() -> ClosedForm {
    let root5 = 5f64.sqrt();
    ClosedForm {
        tf: 1.0,
        state: Box::new(move |t| v(&[2.0 * t * t, -t * t, 2.0 * root5 * t])),
        control: Box::new(|_| v(&[2f64.atan()])),
    }
}

pub fn example2() -> Example2 {
    Example2 {
        problem: ConstrainedBrachistochrone::default(),
        config: SolverConfig {
            gain_k: 0.1,
            gain_tf: 0.05,
            barrier_kc: 0.2,
            grid_points: 101,
            tau_end: 300.0,
            rtol: 1e-3,
            atol: 1e-6,
            ..SolverConfig::default()
        },
        initializer: straight_line_slide(),
        reference: Example2Reference { tf: 0.8001, tf_external: 0.7999, active_arc: (0.56, 1.06) },
    }
}

/// How a named problem obtains its initial trajectory.
#[derive(Debug)]
pub enum Initializer {
    Fssop { tf_guess: f64, cost: Option<FssopCost> },
    ClosedForm(ClosedForm),
    /// Zero control propagated over the fixed horizon.
    ZeroControl { tf: f64 },
}

/// A problem addressable by name.
pub struct Builtin {
    pub name: &'static str,
    pub description: &'static str,
    pub problem: Box<dyn OcpProblem>,
    pub config: SolverConfig,
    pub init: Initializer,
}

impl Builtin {
    pub fn initial_trajectory(&self, cfg: &SolverConfig) -> Result<Trajectory> {
        let p = self.problem.as_ref();
        match &self.init {
            Initializer::Fssop { tf_guess, cost } => solve_fssop(p, *tf_guess, cfg, cost.as_ref()),
            Initializer::ClosedForm(spec) => straight_line_init(p, spec, cfg.grid_points),
            Initializer::ZeroControl { tf } => solve_fssop(p, *tf, cfg, None),
        }
    }
}

pub const NAMES: &[(&str, &str)] = &[
    ("example1", "minimum-time double integrator with |u| <= 1"),
    ("example2", "Brachistochrone with a slope constraint on the position"),
    ("lq", "fixed-horizon LQ double integrator (unconstrained, gradient check)"),
];

/// Looks up a named problem. `fixed_tf` turns the terminal time into a fixed one.
pub fn by_name(name: &str, fixed_tf: Option<f64>) -> Option<Builtin> {
    let description = NAMES.iter().find(|(n, _)| *n == name)?.1;
    let terminal_time = fixed_tf.map_or(TerminalTime::Free, TerminalTime::Fixed);
    let b = match name {
        "example1" => {
            let ex = example1();
            Builtin {
                name: "example1",
                description,
                problem: Box::new(MinTimeDoubleIntegrator { terminal_time, ..ex.problem }),
                config: ex.config,
                init: Initializer::Fssop { tf_guess: fixed_tf.unwrap_or(ex.tf_guess), cost: ex.fssop_cost },
            }
        }
        "example2" => {
            let ex = example2();
            let init = match fixed_tf {
                Some(tf) if tf != ex.initializer.tf => Initializer::Fssop { tf_guess: tf, cost: None },
                _ => Initializer::ClosedForm(ex.initializer),
            };
            Builtin {
                name: "example2",
                description,
                problem: Box::new(ConstrainedBrachistochrone { terminal_time, ..ex.problem }),
                config: ex.config,
                init,
            }
        }
        "lq" => {
            let lq = LqDoubleIntegrator { tf: fixed_tf.unwrap_or(1.0), ..LqDoubleIntegrator::default() };
            Builtin {
                name: "lq",
                description,
                init: Initializer::ZeroControl { tf: lq.tf },
                problem: Box::new(lq),
                config: SolverConfig { gain_k: 1.0, tau_end: 50.0, ..SolverConfig::default() },
            }
        }
        _ => return None,
    };
    Some(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dynamics_defect<P: OcpFunctions>(p: &P, state: &dyn Fn(f64) -> DVector<f64>, control: &dyn Fn(f64) -> DVector<f64>, tf: f64) -> f64 {
        let h = 1e-5;
        (1..100)
            .map(|k| {
                let t = tf * k as f64 / 100.0;
                let rate = (state(t + h) - state(t - h)) / (2.0 * h);
                (rate - p.dynamics(&state(t), &control(t), t)).amax()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn example1_oracle_is_consistent() {
        let ex = example1();
        let o = ex.oracle;
        assert!((o.tf - 3.4494897).abs() < 1e-6);
        assert_eq!((o.state)(0.0), v(&[1.0, 1.0]));
        assert!((o.state)(o.tf).amax() < 1e-12);
        let defect = dynamics_defect(&ex.problem, &|t| (o.state)(t), &|t| (o.control)(t), o.tf);
        assert!(defect < 1e-8, "{defect}");
        for k in 0..=100 {
            let t = o.tf * k as f64 / 100.0;
            assert!(ex.problem.path_constraint(&(o.state)(t), &(o.control)(t), t)[0].abs() < 1e-12);
        }
        assert!(((o.costate)(o.tf) - (o.pi)()).amax() < 1e-12);
    }

    #[test]
    fn example2_initializer_is_consistent() {
        let ex = example2();
        let spec = &ex.initializer;
        let defect = dynamics_defect(&ex.problem, &*spec.state, &*spec.control, spec.tf);
        assert!(defect < 1e-8, "{defect}");
        assert!(((spec.state)(1.0)[2] - 2.0 * 5f64.sqrt()).abs() < 1e-12);
        let half = (spec.state)(0.5);
        assert!((half[0] - 0.5).abs() < 1e-15 && (half[1] + 0.25).abs() < 1e-15);
        let c = ex.problem.path_constraint(&half, &(spec.control)(0.5), 0.5)[0];
        assert!((c + 0.35).abs() < 1e-12);
        assert_eq!(ex.problem.terminal_constraint(&(spec.state)(1.0), 1.0)[0], 0.0);
    }

    #[test]
    fn names_resolve() {
        for (name, _) in NAMES {
            assert!(by_name(name, None).is_some());
        }
        assert!(by_name("nosuch", None).is_none());
    }
}
