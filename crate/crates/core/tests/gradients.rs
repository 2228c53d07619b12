use nalgebra::{DMatrix, DVector};
use vem_core::builtin::{example1, LqDoubleIntegrator, MinTimeDoubleIntegrator};
use vem_core::gradients::{compute_pu, compute_pu_pc, impulse_response, recover_costate, solve_pi, transversality};
use vem_core::init::solve_fssop;
use vem_core::linearization::Linearization;
use vem_core::transition::TransitionTable;
use vem_core::{OcpProblem, TimeGrid, Trajectory};

fn setup<P: OcpProblem>(p: &P, traj: &Trajectory) -> (Linearization, TransitionTable) {
    let lin = Linearization::new(p, traj).unwrap();
    let table = TransitionTable::build(p, traj, &lin).unwrap();
    (lin, table)
}

#[test]
fn lq_gradient_and_costate_at_rest() {
    // With u ≡ 0 the state stays at (1, 0); λ = (1, t_f − t) and p_u = λ₂.
    let p = LqDoubleIntegrator { tf: 1.5, ..LqDoubleIntegrator::default() };
    let grid = TimeGrid::uniform(31, 0.0, 1.5).unwrap();
    let traj = Trajectory::from_controls(&p, grid, vec![DVector::zeros(1); 31]).unwrap();
    let (lin, table) = setup(&p, &traj);
    let pu = compute_pu(&lin, &table, &traj.grid);
    let lambda = recover_costate(&lin, &table, &traj.grid, &DVector::zeros(0), &vec![DVector::zeros(0); 31]);
    for (i, t) in traj.grid.times().iter().enumerate() {
        assert!((pu[i][0] - (1.5 - t)).abs() < 1e-12, "p_u({t})");
        assert!((lambda[i][0] - 1.0).abs() < 1e-12 && (lambda[i][1] - (1.5 - t)).abs() < 1e-12);
    }
}

#[test]
fn lq_gradient_matches_node_sensitivities() {
    // Bumping u at an interior node by ε changes J by about ε·w_k·p_u(t_k).
    let p = LqDoubleIntegrator::default();
    let grid = TimeGrid::uniform(81, 0.0, 1.0).unwrap();
    let u: Vec<_> = grid.times().iter().map(|t| DVector::from_element(1, (2.0 * t).sin() - 0.3)).collect();
    let traj = Trajectory::from_controls(&p, grid, u).unwrap();
    let (lin, table) = setup(&p, &traj);
    let pu = compute_pu(&lin, &table, &traj.grid);
    let weights = traj.grid.weights(0, 80).unwrap();
    let j0 = traj.cost(&p);
    for k in [10, 40, 70] {
        let eps = 1e-6;
        let mut bumped = traj.clone();
        bumped.u[k][0] += eps;
        bumped.propagate(&p).unwrap();
        let numeric = (bumped.cost(&p) - j0) / eps / weights[k];
        assert!((numeric - pu[k][0]).abs() < 2e-2 * pu[k][0].abs().max(0.1), "node {k}: {numeric} vs {}", pu[k][0]);
    }
}

/// Terminal rate `δg/δτ` produced by a given `(π, μ)`, assembled from the
/// impulse response rather than from the gramian.
fn terminal_rate(p: &MinTimeDoubleIntegrator, traj: &Trajectory, pi: &DVector<f64>, mu: &[DVector<f64>], k: f64, k_tf: f64) -> DVector<f64> {
    let (lin, table) = setup(p, traj);
    let pu = compute_pu(&lin, &table, &traj.grid);
    let pc = compute_pu_pc(&lin, &table, &traj.grid, &pu, pi, mu);
    let du: Vec<_> = pc.iter().map(|v| v * -k).collect();
    let dx = impulse_response(&table, &traj.grid, &du);
    let dtf = -k_tf * transversality(&lin, pi);
    &lin.terminal.g_x * &dx[traj.last()] + &lin.terminal.g_rate * dtf
}

#[test]
fn pi_matches_brute_force_solve() {
    let ex = example1();
    let traj = solve_fssop(&ex.problem, 6.0, &ex.config, ex.fssop_cost.as_ref()).unwrap();
    let (k, k_tf) = (ex.config.gain_k, ex.config.gain_tf);
    let n = traj.len();
    let mut mu = vec![DVector::zeros(1); n];
    for (j, v) in [(5, 0.3), (6, 0.7), (20, 0.1)] {
        mu[j][0] = v;
    }
    for mu in [vec![DVector::zeros(1); n], mu] {
        // δg is affine in π; recover it from three evaluations and solve.
        let base = terminal_rate(&ex.problem, &traj, &DVector::zeros(2), &mu, k, k_tf);
        let mut a = DMatrix::zeros(2, 2);
        for c in 0..2 {
            let e = DVector::from_fn(2, |r, _| if r == c { 1.0 } else { 0.0 });
            a.set_column(c, &(terminal_rate(&ex.problem, &traj, &e, &mu, k, k_tf) - &base));
        }
        let brute = a.lu().solve(&-base).unwrap();

        let (lin, table) = setup(&ex.problem, &traj);
        let pu = compute_pu(&lin, &table, &traj.grid);
        let sol = solve_pi(&lin, &table, &traj.grid, &DMatrix::from_element(1, 1, k), k_tf, &pu, &mu).unwrap();
        assert!((&sol.pi - &brute).amax() < 1e-9 * brute.amax().max(1.0), "{} vs {}", sol.pi, brute);
        assert!(terminal_rate(&ex.problem, &traj, &sol.pi, &mu, k, k_tf).amax() < 1e-10);
    }
}

#[test]
fn optimal_multiplier_reproduces_costate() {
    // At the analytic optimum the recovered costate is (√6/3, √6/3 (t_f − t) − 1).
    let ex = example1();
    let oracle = ex.oracle;
    let grid = TimeGrid::uniform(201, 0.0, oracle.tf).unwrap();
    let times = grid.times();
    let x = times.iter().map(|&t| (oracle.state)(t)).collect();
    let u = times.iter().map(|&t| (oracle.control)(t)).collect();
    let traj = Trajectory::new(grid, x, u).unwrap();
    let (lin, table) = setup(&ex.problem, &traj);
    let lambda = recover_costate(&lin, &table, &traj.grid, &(oracle.pi)(), &vec![DVector::zeros(1); 201]);
    for (i, &t) in times.iter().enumerate() {
        assert!((&lambda[i] - (oracle.costate)(t)).amax() < 1e-12, "t = {t}");
    }
    assert!(transversality(&lin, &(oracle.pi)()).abs() < 1e-12);
}
