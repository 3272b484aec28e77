use covsteer::matcore::SymmetricMatrix;
use covsteer::sim::{sample_covariance, simulate, SimOptions};
use covsteer::traj::{time_grid, SteeringSolution};
use covsteer::{make_double_integrator, solve, LtvSystem, SolverConfig, SteeringProblem};
use nalgebra::{DMatrix, DVector};

fn relative_error(estimate: &SymmetricMatrix, truth: &SymmetricMatrix) -> f64 {
    estimate.sub(truth).frobenius() / truth.frobenius()
}

/// Open-loop solution with zero gains on a two-point grid.
fn idle_solution(n: usize, m: usize, sigma0: &SymmetricMatrix) -> SteeringSolution {
    SteeringSolution {
        grid: vec![0.0, 1.0],
        p: vec![SymmetricMatrix::zeros(n); 2],
        sigma: vec![sigma0.clone(); 2],
        k: vec![DMatrix::zeros(m, n); 2],
        mu: None,
        z: None,
        v: None,
        terminal_cost: 0.0,
        running_cost: 0.0,
        mean_terminal_cost: None,
        transversality_residual: 0.0,
    }
}

#[test]
fn paths_without_dynamics_stay_put() {
    let mut problem = make_double_integrator();
    problem.system = LtvSystem::lti(DMatrix::zeros(2, 2), DMatrix::zeros(2, 1), SymmetricMatrix::zeros(2)).unwrap();
    let sol = idle_solution(2, 1, &problem.sigma0);
    let batch = simulate(&problem, &sol, &SimOptions::new(20, 0.01, 4, 0.0, 1.0)).unwrap();
    for path in &batch.states {
        assert!(path.iter().all(|x| x == &path[0]));
    }
    assert_eq!(batch.times.len(), 101);
}

#[test]
fn fixed_seed_is_bitwise_reproducible() {
    let problem = make_double_integrator();
    let solved = solve(&problem, &SolverConfig::default()).unwrap();
    let opts = SimOptions::new(300, 1e-3, 99, 0.0, 1.0);
    let a = simulate(&problem, &solved.solution, &opts).unwrap();
    let b = simulate(&problem, &solved.solution, &opts).unwrap();
    assert_eq!(a, b);
    let other = simulate(&problem, &solved.solution, &SimOptions { seed: 100, ..opts }).unwrap();
    assert_ne!(a.states, other.states);
}

#[test]
fn a_path_does_not_depend_on_the_batch() {
    let problem = make_double_integrator();
    let solved = solve(&problem, &SolverConfig::default()).unwrap();
    let small = simulate(&problem, &solved.solution, &SimOptions::new(5, 1e-3, 3, 0.0, 1.0)).unwrap();
    let mut opts = SimOptions::new(500, 1e-3, 3, 0.0, 1.0);
    opts.stored_paths = 5;
    let large = simulate(&problem, &solved.solution, &opts).unwrap();
    assert_eq!(small.states, large.states);
    assert_eq!(small.inputs, large.inputs);
    assert_eq!(large.checkpoint_states[2].len(), 500);
    for (p, path) in small.states.iter().enumerate() {
        assert_eq!(path.last(), Some(&large.checkpoint_states[2][p]));
    }
}

/// RK4 reference for `ẋ = (A + BK(t))x` with `K` interpolated linearly.
fn closed_loop_rk4(problem: &SteeringProblem, sol: &SteeringSolution, x0: &DVector<f64>, steps: usize) -> DVector<f64> {
    let gain = |t: f64| {
        let s = (t - sol.grid[0]) / (sol.grid[1] - sol.grid[0]);
        let k = (s.floor() as usize).min(sol.grid.len() - 2);
        let w = s - k as f64;
        &sol.k[k] * (1.0 - w) + &sol.k[k + 1] * w
    };
    let f = |t: f64, x: &DVector<f64>| {
        let m = problem.eval_system(t).unwrap();
        (&m.a + &m.b * gain(t)) * x
    };
    let h = (problem.t1 - problem.t0) / steps as f64;
    let mut x = x0.clone();
    for i in 0..steps {
        let t = problem.t0 + i as f64 * h;
        let k1 = f(t, &x);
        let k2 = f(t + 0.5 * h, &(&x + &k1 * (0.5 * h)));
        let k3 = f(t + 0.5 * h, &(&x + &k2 * (0.5 * h)));
        let k4 = f(t + h, &(&x + &k3 * h));
        x += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
    }
    x
}

#[test]
fn noiseless_paths_follow_the_closed_loop_ode() {
    let problem = make_double_integrator();
    let solved = solve(&problem, &SolverConfig::default()).unwrap();
    let dt = 1e-3;
    let mut opts = SimOptions::new(3, dt, 12, 0.0, 1.0);
    opts.noise = false;
    let batch = simulate(&problem, &solved.solution, &opts).unwrap();
    for path in &batch.states {
        let reference = closed_loop_rk4(&problem, &solved.solution, &path[0], 20_000);
        let err = (path.last().unwrap() - reference).norm();
        assert!(err <= 10.0 * dt, "{err:e}");
    }
}

#[test]
fn initial_draws_have_the_initial_covariance() {
    let problem = make_double_integrator();
    let sol = idle_solution(2, 1, &problem.sigma0);
    let mut opts = SimOptions::new(10_000, 0.5, 1, 0.0, 1.0);
    opts.stored_paths = 0;
    let batch = simulate(&problem, &sol, &opts).unwrap();
    let cov = sample_covariance(&batch, 0).unwrap();
    assert!(relative_error(&cov, &problem.sigma0) <= 0.1);
    assert_eq!(batch.checkpoint_times, vec![0.0, 0.5, 1.0]);
}

#[test]
fn sample_covariance_tracks_the_prediction() {
    let problem = make_double_integrator();
    let solved = solve(&problem, &SolverConfig::default()).unwrap();
    let mut opts = SimOptions::new(10_000, 5e-4, 2024, 0.0, 1.0);
    opts.stored_paths = 0;
    let batch = simulate(&problem, &solved.solution, &opts).unwrap();
    let cov = sample_covariance(&batch, 2).unwrap();
    let rel = relative_error(&cov, solved.solution.terminal_sigma());
    assert!(rel <= 0.1, "{rel}");
    assert!(cov.min_eigenvalue() >= 0.0);
    assert_eq!(batch.sample_mean.len(), batch.times.len());
}

#[test]
fn feedforward_steers_the_sample_mean() {
    let mut problem = make_double_integrator();
    problem.mu0 = Some(nalgebra::dvector![1.0, 0.0]);
    problem.mud = Some(nalgebra::dvector![-1.0, 0.5]);
    let solved = solve(&problem, &SolverConfig::default()).unwrap();
    let mut opts = SimOptions::new(4000, 1e-3, 5, 0.0, 1.0);
    opts.stored_paths = 0;
    let batch = simulate(&problem, &solved.solution, &opts).unwrap();
    let predicted = solved.solution.mu.as_ref().unwrap().last().unwrap();
    let err = (batch.sample_mean.last().unwrap() - predicted).norm();
    assert!(err <= 0.15, "{err}");
}

#[test]
fn bad_options_are_rejected() {
    let problem = make_double_integrator();
    let sol = idle_solution(2, 1, &problem.sigma0);
    assert!(simulate(&problem, &sol, &SimOptions::new(0, 0.01, 0, 0.0, 1.0)).is_err());
    assert!(simulate(&problem, &sol, &SimOptions::new(2, 0.0, 0, 0.0, 1.0)).is_err());
    let mut short = sol.clone();
    short.grid = time_grid(0.0, 0.5, 1);
    assert!(simulate(&problem, &short, &SimOptions::new(2, 0.01, 0, 0.0, 1.0)).is_err());
}
