use nalgebra::{DMatrix, DVector};
use vem_core::builtin::{example2, ConstrainedBrachistochrone};
use vem_core::init::straight_line_init;
use vem_core::linearization::Linearization;
use vem_core::problem::FiniteDiff;
use vem_core::transition::TransitionTable;
use vem_core::{OcpFunctions, OcpProblem, TerminalTime, TimeGrid, Trajectory};

/// `ẋ = a(t) x + u` with `a(t) = a0 + a1 t`.
struct Scalar {
    a0: f64,
    a1: f64,
}

impl OcpFunctions for Scalar {
    fn state_dim(&self) -> usize {
        1
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn x0(&self) -> DVector<f64> {
        DVector::from_element(1, 1.0)
    }
    fn terminal_time(&self) -> TerminalTime {
        TerminalTime::Fixed(2.0)
    }
    fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DVector<f64> {
        DVector::from_element(1, (self.a0 + self.a1 * t) * x[0] + u[0])
    }
}

fn table_for<P: OcpProblem>(p: &P, traj: &Trajectory) -> TransitionTable {
    let lin = Linearization::new(p, traj).unwrap();
    TransitionTable::build(p, traj, &lin).unwrap()
}

fn scalar_run(a0: f64, a1: f64) -> (Trajectory, TransitionTable) {
    let p = FiniteDiff(Scalar { a0, a1 });
    let grid = TimeGrid::uniform(21, 0.0, 2.0).unwrap();
    let u = grid.times().iter().map(|t| DVector::from_element(1, t.cos())).collect();
    let traj = Trajectory::from_controls(&p, grid, u).unwrap();
    let table = table_for(&p, &traj);
    (traj, table)
}

#[test]
fn constant_coefficient_matches_exponential() {
    let (traj, table) = scalar_run(-0.8, 0.0);
    let t = traj.grid.times();
    for i in 0..t.len() {
        for j in 0..=i {
            let exact = (-0.8 * (t[i] - t[j])).exp();
            assert!((table.phi(i, j)[(0, 0)] - exact).abs() < 1e-8, "({i},{j})");
        }
    }
}

#[test]
fn time_varying_coefficient_matches_closed_form() {
    let (traj, table) = scalar_run(0.1, 0.6);
    let t = traj.grid.times();
    let integral = |s: f64| 0.1 * s + 0.3 * s * s;
    for i in 0..t.len() {
        for j in 0..=i {
            let exact = (integral(t[i]) - integral(t[j])).exp();
            assert!((table.phi(i, j)[(0, 0)] - exact).abs() < 1e-7 * exact, "({i},{j})");
        }
    }
}

#[test]
fn nonlinear_table_properties() {
    let ex = example2();
    let p = ConstrainedBrachistochrone::default();
    let traj = straight_line_init(&p, &ex.initializer, 31).unwrap();
    let table = table_for(&p, &traj);
    let lin = Linearization::new(&p, &traj).unwrap();
    let n = table.len();
    for i in 0..n {
        assert_eq!(*table.phi(i, i), DMatrix::identity(3, 3));
        for j in 0..=i {
            assert!((table.ho(i, j) - table.phi(i, j) * &lin.nodes[j].f_u).amax() < 1e-14);
            for k in 0..=j {
                assert!((table.phi(i, k) - table.phi(i, j) * table.phi(j, k)).amax() < 1e-8);
            }
        }
        for j in i + 1..n {
            assert_eq!(table.ho(i, j).amax(), 0.0);
        }
    }
}

#[test]
fn transition_predicts_state_perturbation() {
    // Φ(t_f, t0) against the difference of two nonlinear propagations.
    let p = ConstrainedBrachistochrone::default();
    let ex = example2();
    let traj = straight_line_init(&p, &ex.initializer, 101).unwrap();
    let table = table_for(&p, &traj);
    let last = traj.last();

    let eps = 1e-6;
    let mut bumped = traj.clone();
    bumped.x[0][2] += eps;
    // Propagate by hand from the perturbed start with the same controls.
    let times = traj.grid.times();
    let mut x = bumped.x[0].clone();
    for i in 0..last {
        let h = times[i + 1] - times[i];
        let steps = 20;
        let dt = h / steps as f64;
        for s in 0..steps {
            let t = times[i] + s as f64 * dt;
            let u_at = |tt: f64| traj.control_at(i, (tt - times[i]) / h);
            let k1 = p.dynamics(&x, &u_at(t), t);
            let k2 = p.dynamics(&(&x + &k1 * (0.5 * dt)), &u_at(t + 0.5 * dt), t + 0.5 * dt);
            let k3 = p.dynamics(&(&x + &k2 * (0.5 * dt)), &u_at(t + 0.5 * dt), t + 0.5 * dt);
            let k4 = p.dynamics(&(&x + &k3 * dt), &u_at(t + dt), t + dt);
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        }
    }
    let predicted = table.phi(last, 0).column(2) * eps;
    let actual = &x - &traj.x[last];
    assert!((actual - predicted).amax() < 1e-9, "{}", table.phi(last, 0));
}
