use nalgebra::DVector;
use vem_core::builtin::{example1, LqDoubleIntegrator};
use vem_core::verification::{classic_residuals, fd_gradient_check, optimality_residuals};
use vem_core::{TimeGrid, Trajectory};

fn example1_optimum() -> (Trajectory, Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let oracle = example1().oracle;
    let grid = TimeGrid::uniform(161, 0.0, oracle.tf).unwrap();
    let times = grid.times();
    let x = times.iter().map(|&t| (oracle.state)(t)).collect();
    let u: Vec<DVector<f64>> = times.iter().map(|&t| (oracle.control)(t)).collect();
    let lambda: Vec<DVector<f64>> = times.iter().map(|&t| (oracle.costate)(t)).collect();
    // Stationarity λ₂ + 2uμ = 0 fixes μ on both bang arcs.
    let mu = lambda.iter().zip(&u).map(|(l, u)| DVector::from_element(1, -l[1] / (2.0 * u[0]))).collect();
    (Trajectory::new(grid, x, u).unwrap(), lambda, mu)
}

#[test]
fn classic_conditions_hold_at_analytic_optimum() {
    let ex = example1();
    let (traj, lambda, mu) = example1_optimum();
    let r = classic_residuals(&ex.problem, &traj, &lambda, &(ex.oracle.pi)(), &mu).unwrap();
    assert!(r.costate_dynamics < 1e-12, "{r:?}");
    assert!(r.stationarity < 1e-12 && r.terminal_costate < 1e-12 && r.transversality < 1e-12, "{r:?}");
    assert!(r.complementarity < 1e-12, "{r:?}");
}

#[test]
fn costate_free_residuals_at_analytic_optimum() {
    let ex = example1();
    let (traj, _, mu) = example1_optimum();
    let r = optimality_residuals(&ex.problem, &traj, &(ex.oracle.pi)(), &mu).unwrap();
    assert!(r.pu_pc_inf < 1e-10 && r.transversality < 1e-12, "{r:?}");
    let wrong = optimality_residuals(&ex.problem, &traj, &DVector::from_vec(vec![0.5, -1.0]), &mu).unwrap();
    // T = 1 + π₂ does not see π₁; the control residual does.
    assert!(wrong.pu_pc_inf > 0.1, "{wrong:?}");
}

fn lq_fd_error(nodes: usize, seed: u64) -> f64 {
    let p = LqDoubleIntegrator { tf: 2.0, ..LqDoubleIntegrator::default() };
    let grid = TimeGrid::uniform(nodes, 0.0, 2.0).unwrap();
    let u = grid.times().iter().map(|t| DVector::from_element(1, (1.7 * t).cos())).collect();
    let traj = Trajectory::from_controls(&p, grid, u).unwrap();
    fd_gradient_check(&p, &traj, seed).unwrap()
}

#[test]
fn fd_check_is_seed_stable() {
    for seed in 0..5 {
        let a = lq_fd_error(121, seed);
        assert!(a < 1e-3, "seed {seed}: {a}");
        assert_eq!(a, lq_fd_error(121, seed));
    }
}

#[test]
fn fd_mismatch_shrinks_with_the_grid() {
    let errors: Vec<f64> = [31, 61, 121, 241].iter().map(|&n| lq_fd_error(n, 3)).collect();
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
}
