//! Optimal control problem interface.
//!
//! A problem is a Bolza cost `φ(x(t_f), t_f) + ∫ L(x, u, t) dt` over the
//! dynamics `ẋ = f(x, u, t)` with `x(t0) = x0`, terminal equality
//! constraints `g(x(t_f), t_f) = 0` and path constraints `C(x, u, t) ≤ 0`.
//!
//! Values live in [`OcpFunctions`]; first (and for `φ`, second) derivatives
//! live in [`OcpProblem`]. Implement both analytically, or wrap a
//! values-only problem in [`FiniteDiff`] to opt into central differences.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Role of a path-constraint component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    /// `C_i(x, u, t) ≤ 0`
    Mixed,
    /// `C_i(x, t) ≤ 0`; the `C_u` row must vanish.
    PureState,
    /// `C_i(u, t) ≤ 0`; the `C_x` row must vanish.
    PureControl,
    /// `C_i(x, u, t) = 0` on the whole horizon.
    Equality,
}

impl ConstraintKind {
    pub fn is_inequality(self) -> bool {
        !matches!(self, ConstraintKind::Equality)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalTime {
    Free,
    Fixed(f64),
}

/// Function values of an optimal control problem.
///
/// Callbacks must be pure: kernel assembly evaluates them in arbitrary order.
pub trait OcpFunctions: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn terminal_dim(&self) -> usize {
        0
    }
    fn path_dim(&self) -> usize {
        0
    }

    fn t0(&self) -> f64 {
        0.0
    }
    fn x0(&self) -> DVector<f64>;
    fn terminal_time(&self) -> TerminalTime {
        TerminalTime::Free
    }
    fn constraint_kinds(&self) -> Vec<ConstraintKind> {
        vec![ConstraintKind::Mixed; self.path_dim()]
    }

    fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DVector<f64>;
    fn running_cost(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> f64 {
        0.0
    }
    fn terminal_cost(&self, _x: &DVector<f64>, _t: f64) -> f64 {
        0.0
    }
    fn terminal_constraint(&self, _x: &DVector<f64>, _t: f64) -> DVector<f64> {
        DVector::zeros(0)
    }
    fn path_constraint(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DVector<f64> {
        DVector::zeros(0)
    }
}

/// Derivatives required by the evolution equations.
pub trait OcpProblem: OcpFunctions {
    /// `∂f/∂x`, n×n.
    fn f_x(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DMatrix<f64>;
    /// `∂f/∂u`, n×m.
    fn f_u(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DMatrix<f64>;
    fn l_x(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DVector<f64>;
    fn l_u(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DVector<f64>;
    fn phi_x(&self, x: &DVector<f64>, t: f64) -> DVector<f64>;
    fn phi_t(&self, x: &DVector<f64>, t: f64) -> f64;
    fn phi_xx(&self, x: &DVector<f64>, t: f64) -> DMatrix<f64>;
    fn phi_tx(&self, x: &DVector<f64>, t: f64) -> DVector<f64>;
    /// `∂g/∂x_f`, q×n.
    fn g_x(&self, x: &DVector<f64>, t: f64) -> DMatrix<f64>;
    fn g_t(&self, x: &DVector<f64>, t: f64) -> DVector<f64>;
    /// `∂C/∂x`, r×n.
    fn c_x(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DMatrix<f64>;
    /// `∂C/∂u`, r×m.
    fn c_u(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DMatrix<f64>;
}

/// Central-difference Jacobian of `f` at `point`.
///
/// Column `j` uses the step `sqrt(ε)·max(1, |point_j|)`.
pub fn fd_jacobian<F>(f: F, point: &DVector<f64>) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    fd_jacobian_with_step(f, point, f64::EPSILON.sqrt())
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient<F>(f: F, point: &DVector<f64>) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let jac = fd_jacobian(|p| DVector::from_element(1, f(p)), point)?;
    Ok(jac.row(0).transpose())
}

fn fd_jacobian_with_step<F>(f: F, point: &DVector<f64>, rel: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let centre = f(point);
    if centre.iter().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation { callback: "fd_jacobian" });
    }
    let mut jac = DMatrix::zeros(centre.len(), point.len());
    let mut probe = point.clone();
    for j in 0..point.len() {
        let h = rel * point[j].abs().max(1.0);
        probe[j] = point[j] + h;
        let plus = f(&probe);
        probe[j] = point[j] - h;
        let minus = f(&probe);
        probe[j] = point[j];
        if plus.len() != centre.len() || minus.len() != centre.len() {
            return Err(Error::Dimension("callback output length changed between evaluations".into()));
        }
        if plus.iter().chain(minus.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Evaluation { callback: "fd_jacobian" });
        }
        jac.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    Ok(jac)
}

/// Opt-in finite-difference derivatives for a values-only problem.
///
/// First derivatives use the `sqrt(ε)` step; the second derivatives of `φ`
/// difference the first-order gradient with an `ε^(1/3)` step.
pub struct FiniteDiff<P>(pub P);

impl<P: OcpFunctions> FiniteDiff<P> {
    fn jac_x(&self, g: impl Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>) -> DMatrix<f64> {
        fd_jacobian(g, x).unwrap_or_else(|_| DMatrix::from_element(0, 0, f64::NAN))
    }
}

fn second_order_grad(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>) -> DVector<f64> {
    let rel = f64::EPSILON.cbrt();
    fd_jacobian_with_step(|p| DVector::from_element(1, f(p)), x, rel)
        .map(|j| j.row(0).transpose())
        .unwrap_or_else(|_| DVector::from_element(x.len(), f64::NAN))
}

impl<P: OcpFunctions> OcpFunctions for FiniteDiff<P> {
    fn state_dim(&self) -> usize {
        self.0.state_dim()
    }
    fn control_dim(&self) -> usize {
        self.0.control_dim()
    }
    fn terminal_dim(&self) -> usize {
        self.0.terminal_dim()
    }
    fn path_dim(&self) -> usize {
        self.0.path_dim()
    }
    fn t0(&self) -> f64 {
        self.0.t0()
    }
    fn x0(&self) -> DVector<f64> {
        self.0.x0()
    }
    fn terminal_time(&self) -> TerminalTime {
        self.0.terminal_time()
    }
    fn constraint_kinds(&self) -> Vec<ConstraintKind> {
        self.0.constraint_kinds()
    }
    fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DVector<f64> {
        self.0.dynamics(x, u, t)
    }
    fn running_cost(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> f64 {
        self.0.running_cost(x, u, t)
    }
    fn terminal_cost(&self, x: &DVector<f64>, t: f64) -> f64 {
        self.0.terminal_cost(x, t)
    }
    fn terminal_constraint(&self, x: &DVector<f64>, t: f64) -> DVector<f64> {
        self.0.terminal_constraint(x, t)
    }
    fn path_constraint(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DVector<f64> {
        self.0.path_constraint(x, u, t)
    }
}

impl<P: OcpFunctions> OcpProblem for FiniteDiff<P> {
    fn f_x(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DMatrix<f64> {
        self.jac_x(|p| self.0.dynamics(p, u, t), x)
    }
    fn f_u(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DMatrix<f64> {
        self.jac_x(|p| self.0.dynamics(x, p, t), u)
    }
    fn l_x(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DVector<f64> {
        self.jac_x(|p| DVector::from_element(1, self.0.running_cost(p, u, t)), x).row(0).transpose()
    }
    fn l_u(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DVector<f64> {
        self.jac_x(|p| DVector::from_element(1, self.0.running_cost(x, p, t)), u).row(0).transpose()
    }
    fn phi_x(&self, x: &DVector<f64>, t: f64) -> DVector<f64> {
        self.jac_x(|p| DVector::from_element(1, self.0.terminal_cost(p, t)), x).row(0).transpose()
    }
    fn phi_t(&self, x: &DVector<f64>, t: f64) -> f64 {
        let tv = DVector::from_element(1, t);
        self.jac_x(|p| DVector::from_element(1, self.0.terminal_cost(x, p[0])), &tv)[(0, 0)]
    }
    fn phi_xx(&self, x: &DVector<f64>, t: f64) -> DMatrix<f64> {
        let n = x.len();
        let rel = f64::EPSILON.cbrt();
        let grad = |p: &DVector<f64>| second_order_grad(|q| self.0.terminal_cost(q, t), p);
        fd_jacobian_with_step(grad, x, rel).unwrap_or_else(|_| DMatrix::from_element(n, n, f64::NAN))
    }
    fn phi_tx(&self, x: &DVector<f64>, t: f64) -> DVector<f64> {
        let rel = f64::EPSILON.cbrt();
        let tv = DVector::from_element(1, t);
        let grad = |p: &DVector<f64>| second_order_grad(|q| self.0.terminal_cost(q, p[0]), x);
        fd_jacobian_with_step(grad, &tv, rel)
            .map(|j| j.column(0).into_owned())
            .unwrap_or_else(|_| DVector::from_element(x.len(), f64::NAN))
    }
    fn g_x(&self, x: &DVector<f64>, t: f64) -> DMatrix<f64> {
        if self.0.terminal_dim() == 0 {
            return DMatrix::zeros(0, x.len());
        }
        self.jac_x(|p| self.0.terminal_constraint(p, t), x)
    }
    fn g_t(&self, x: &DVector<f64>, t: f64) -> DVector<f64> {
        if self.0.terminal_dim() == 0 {
            return DVector::zeros(0);
        }
        let tv = DVector::from_element(1, t);
        self.jac_x(|p| self.0.terminal_constraint(x, p[0]), &tv).column(0).into_owned()
    }
    fn c_x(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DMatrix<f64> {
        if self.0.path_dim() == 0 {
            return DMatrix::zeros(0, x.len());
        }
        self.jac_x(|p| self.0.path_constraint(p, u, t), x)
    }
    fn c_u(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DMatrix<f64> {
        if self.0.path_dim() == 0 {
            return DMatrix::zeros(0, u.len());
        }
        self.jac_x(|p| self.0.path_constraint(x, p, t), u)
    }
}

/// Box from which [`validate_problem`] draws sample points.
#[derive(Clone, Debug)]
pub struct SampleBox {
    pub x_lo: DVector<f64>,
    pub x_hi: DVector<f64>,
    pub u_lo: DVector<f64>,
    pub u_hi: DVector<f64>,
    pub t_lo: f64,
    pub t_hi: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    /// A callback returned an output of the wrong shape.
    Dimension { callback: &'static str, expected: (usize, usize), got: (usize, usize) },
    /// A callback returned NaN or infinity.
    NonFinite { callback: &'static str },
    /// A constraint tagged pure-state depends on `u`, or pure-control on `x`.
    KindMismatch { constraint: usize, kind: ConstraintKind },
    /// `constraint_kinds()` does not have `r` entries.
    KindCount { expected: usize, got: usize },
}

const VALIDATION_SAMPLES: usize = 10;

/// Samples the problem at random points and reports inconsistencies.
///
/// An empty report means the problem is usable. Each distinct violation is
/// reported once, however many samples trip it.
pub fn validate_problem<P: OcpProblem + ?Sized>(p: &P, bounds: &SampleBox, seed: u64) -> Vec<Violation> {
    let (n, m, q, r) = (p.state_dim(), p.control_dim(), p.terminal_dim(), p.path_dim());
    let mut report = Vec::new();
    let push = |v: Violation, report: &mut Vec<Violation>| {
        if !report.contains(&v) {
            report.push(v);
        }
    };

    let kinds = p.constraint_kinds();
    if kinds.len() != r {
        push(Violation::KindCount { expected: r, got: kinds.len() }, &mut report);
    }
    let x0 = p.x0();
    if x0.len() != n {
        push(Violation::Dimension { callback: "x0", expected: (n, 1), got: (x0.len(), 1) }, &mut report);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |lo: &DVector<f64>, hi: &DVector<f64>| {
        DVector::from_iterator(lo.len(), lo.iter().zip(hi.iter()).map(|(a, b)| if b > a { rng.random_range(*a..*b) } else { *a }))
    };

    for _ in 0..VALIDATION_SAMPLES {
        let x = draw(&bounds.x_lo, &bounds.x_hi);
        let u = draw(&bounds.u_lo, &bounds.u_hi);
        let t = 0.5 * (bounds.t_lo + bounds.t_hi);

        let vec_check = |name: &'static str, v: DVector<f64>, len: usize, report: &mut Vec<Violation>| {
            if v.len() != len {
                push(Violation::Dimension { callback: name, expected: (len, 1), got: (v.len(), 1) }, report);
            } else if v.iter().any(|e| !e.is_finite()) {
                push(Violation::NonFinite { callback: name }, report);
            }
        };
        vec_check("f", p.dynamics(&x, &u, t), n, &mut report);
        vec_check("L_x", p.l_x(&x, &u, t), n, &mut report);
        vec_check("L_u", p.l_u(&x, &u, t), m, &mut report);
        vec_check("phi_x", p.phi_x(&x, t), n, &mut report);
        vec_check("phi_tx", p.phi_tx(&x, t), n, &mut report);
        vec_check("g", p.terminal_constraint(&x, t), q, &mut report);
        vec_check("g_tf", p.g_t(&x, t), q, &mut report);
        vec_check("C", p.path_constraint(&x, &u, t), r, &mut report);

        let mat_check = |name: &'static str, a: &DMatrix<f64>, shape: (usize, usize), report: &mut Vec<Violation>| {
            if a.shape() != shape {
                push(Violation::Dimension { callback: name, expected: shape, got: a.shape() }, report);
                false
            } else if a.iter().any(|e| !e.is_finite()) {
                push(Violation::NonFinite { callback: name }, report);
                false
            } else {
                true
            }
        };
        mat_check("f_x", &p.f_x(&x, &u, t), (n, n), &mut report);
        mat_check("f_u", &p.f_u(&x, &u, t), (n, m), &mut report);
        mat_check("phi_xx", &p.phi_xx(&x, t), (n, n), &mut report);
        mat_check("g_xf", &p.g_x(&x, t), (q, n), &mut report);
        let cx = p.c_x(&x, &u, t);
        let cu = p.c_u(&x, &u, t);
        let cx_ok = mat_check("C_x", &cx, (r, n), &mut report);
        let cu_ok = mat_check("C_u", &cu, (r, m), &mut report);

        for (i, kind) in kinds.iter().enumerate().take(r) {
            let bad = match kind {
                ConstraintKind::PureState => cu_ok && cu.row(i).iter().any(|v| v.abs() > 1e-12),
                ConstraintKind::PureControl => cx_ok && cx.row(i).iter().any(|v| v.abs() > 1e-12),
                _ => false,
            };
            if bad {
                push(Violation::KindMismatch { constraint: i, kind: *kind }, &mut report);
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    struct Linear;
    impl OcpFunctions for Linear {
        fn state_dim(&self) -> usize {
            2
        }
        fn control_dim(&self) -> usize {
            1
        }
        fn x0(&self) -> DVector<f64> {
            DVector::zeros(2)
        }
        fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>, _t: f64) -> DVector<f64> {
            DVector::from_vec(vec![0.3 * x[0] + 2.0 * x[1], -x[0] + 0.5 * u[0]])
        }
        fn running_cost(&self, _x: &DVector<f64>, u: &DVector<f64>, _t: f64) -> f64 {
            0.5 * u[0] * u[0]
        }
    }

    #[test]
    fn fd_recovers_linear_jacobian() {
        let p = FiniteDiff(Linear);
        let x = DVector::from_vec(vec![1.7, -3.0]);
        let u = DVector::from_vec(vec![0.4]);
        let fx = p.f_x(&x, &u, 0.0);
        let expect = DMatrix::from_row_slice(2, 2, &[0.3, 2.0, -1.0, 0.0]);
        assert_abs_diff_eq!(fx, expect, epsilon = 1e-6);
        assert_abs_diff_eq!(p.f_u(&x, &u, 0.0)[(1, 0)], 0.5, epsilon = 1e-6);
    }

    #[test]
    fn fd_quadratic_cost_gradient() {
        let p = FiniteDiff(Linear);
        let g = p.l_u(&DVector::zeros(2), &DVector::from_element(1, 2.0), 0.0);
        assert_abs_diff_eq!(g[0], 2.0, epsilon = 1e-6);
    }

    #[test]
    fn fd_rejects_non_finite() {
        let err = fd_jacobian(|p| DVector::from_element(1, p[0].ln()), &DVector::from_element(1, -1.0));
        assert!(matches!(err, Err(Error::Evaluation { .. })));
    }
}
