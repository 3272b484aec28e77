//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use covsteer::lft::{care_map, f2_raw, f4_raw, MapContext};
use covsteer::matcore::{frobenius_norm, SymmetricMatrix};
use covsteer::model::controllability_rank;
use covsteer::solver::{basin_scan, solve_fixed_point};
use covsteer::stm::{propagate, StmBlocks};
use covsteer::traj::objective_for_gains;
use covsteer::{make_clohessy_wiltshire, make_double_integrator, simulate, LtvSystem, SimOptions, SolverConfig, SteeringProblem};
use covsteer_cli::run_demo;
use nalgebra::{dmatrix, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn pass_if(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn uniform(r: usize, c: usize, scale: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-scale..scale))
}

fn random_sym(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> SymmetricMatrix {
    let m = uniform(n, n, scale, rng);
    SymmetricMatrix::new((&m + m.transpose()) * 0.5).unwrap()
}

fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> SymmetricMatrix {
    let l = uniform(n, n, 1.0, rng);
    SymmetricMatrix::new(&l * l.transpose() + DMatrix::identity(n, n) * 0.1).unwrap()
}

fn random_lti(n: usize, m: usize, rng: &mut ChaCha8Rng) -> LtvSystem {
    let a = uniform(n, n, 1.0, rng);
    let b = uniform(n, m, 1.0, rng);
    let c = uniform(n, n, 1.0, rng);
    LtvSystem::lti(a, b, SymmetricMatrix::new(c.transpose() * &c).unwrap()).unwrap()
}

fn sym_err(m: &DMatrix<f64>) -> f64 {
    frobenius_norm(&(m - m.transpose()))
}

/// The six block identities of a Hamiltonian transition matrix, computed
/// directly from the blocks.
fn identity_residuals(b: &StmBlocks) -> [f64; 6] {
    let n = b.n;
    let i = DMatrix::<f64>::identity(n, n);
    let (p11, p12, p21, p22) = (&b.phi11, &b.phi12, &b.phi21, &b.phi22);
    [
        frobenius_norm(&(p11.transpose() * p22 - p21.transpose() * p12 - &i)),
        sym_err(&(p12.transpose() * p22)),
        sym_err(&(p21.transpose() * p11)),
        frobenius_norm(&(p11 * p22.transpose() - p12 * p21.transpose() - &i)),
        sym_err(&(p12 * p11.transpose())),
        sym_err(&(p21 * p22.transpose())),
    ]
}

fn demo_criterion(name: &str, max_iterations: usize, tolerance: f64, budget_s: f64) -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let summary = run_demo(name, dir.path(), &mut std::io::sink()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let ok = summary.iterations <= max_iterations && summary.max_deviation <= tolerance && elapsed < budget_s;
    pass_if(
        ok,
        format!(
            "{} iterations, max deviation {:.3e} (tol {tolerance:e}), {elapsed:.2} s (budget {budget_s} s)",
            summary.iterations, summary.max_deviation
        ),
    )
}

fn criterion_1() -> Verdict {
    demo_criterion("double-integrator", 200, 5e-3, 5.0)
}

fn criterion_2() -> Verdict {
    demo_criterion("cw", usize::MAX, 1e-2, 60.0)
}

/// Random planar problem with controllable `(A, B)` whose transition
/// blocks admit every map.
fn random_planar_problem(rng: &mut ChaCha8Rng, cfg: &SolverConfig) -> (SteeringProblem, MapContext) {
    loop {
        let a = uniform(2, 2, 1.0, rng);
        let b = uniform(2, 1, 1.0, rng);
        if controllability_rank(&a, &b).0 < 2 {
            continue;
        }
        let c = uniform(2, 2, 1.0, rng);
        let problem = SteeringProblem {
            system: LtvSystem::lti(a, b, SymmetricMatrix::new(c.transpose() * &c).unwrap()).unwrap(),
            t0: 0.0,
            t1: 1.0,
            sigma0: random_spd(2, rng),
            sigmad: random_spd(2, rng),
            mu0: None,
            mud: None,
        };
        if !problem.validate().is_empty() {
            continue;
        }
        if let Ok(ctx) = MapContext::for_problem(&problem, cfg) {
            return (problem, ctx);
        }
    }
}

fn criterion_3() -> Verdict {
    let cfg = SolverConfig {
        tol: 1e-10,
        max_iter: 20_000,
        ..SolverConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut details = Vec::new();
    let mut ok = true;
    for _ in 0..3 {
        let (_, ctx) = random_planar_problem(&mut rng, &cfg);
        let runs = basin_scan(&ctx, &cfg, 100);
        let points: Vec<&SymmetricMatrix> = runs.iter().filter_map(|r| r.fixed_point.as_ref()).collect();
        let converged = runs.iter().filter(|r| r.converged).count();
        let mut spread = 0.0f64;
        for (i, x) in points.iter().enumerate() {
            for y in &points[i + 1..] {
                spread = spread.max(x.sub(y).frobenius());
            }
        }
        ok &= converged >= 99 && spread <= 1e-6;
        details.push(format!("{converged}/100 converged, spread {spread:.1e}"));
    }
    pass_if(ok, details.join("; "))
}

fn criterion_4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_default = 0.0f64;
    let mut worst_ratio = f64::INFINITY;
    for k in 0..20 {
        let n = 1 + k % 6;
        let m = rng.random_range(1..=n);
        let sys = random_lti(n, m, &mut rng);
        let coarse = identity_residuals(&StmBlocks::from_full(&propagate(&sys, 0.0, 1.0, 2000).map_err(|e| e.to_string())?));
        let fine = identity_residuals(&StmBlocks::from_full(&propagate(&sys, 0.0, 1.0, 4000).map_err(|e| e.to_string())?));
        for (c, f) in coarse.iter().zip(&fine) {
            worst_default = worst_default.max(*c);
            worst_ratio = worst_ratio.min(if *f == 0.0 { f64::INFINITY } else { c / f });
        }
    }
    pass_if(
        worst_default <= 1e-8 && worst_ratio >= 10.0,
        format!("max residual {worst_default:.2e} at 2000 steps; smallest shrink on doubling {worst_ratio:.2}x (need 10x)"),
    )
}

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut product, mut care, mut sylvester) = (0.0f64, 0.0f64, 0.0f64);
    let mut min_eig = f64::INFINITY;
    for k in 0..500 {
        let n = 1 + k % 6;
        let h1 = random_sym(n, 3.0, &mut rng);
        let sd = random_spd(n, &mut rng);
        let p1 = care_map(&h1, &sd);
        let (p, h, s) = (p1.as_mat(), h1.as_mat(), sd.as_mat());
        let i = DMatrix::<f64>::identity(n, n);
        let abar = (h + s) * 0.5;
        product = product.max(frobenius_norm(&((p + s) * (p + h) - &i)));
        care = care.max(frobenius_norm(&(p * p + p * &abar + &abar * p + (s * h + h * s) * 0.5 - &i)));
        sylvester = sylvester.max(frobenius_norm(&((h - s) * p + p * (s - h) - (s * h - h * s))));
        let sum = p + s;
        let sum = (&sum + sum.transpose()) * 0.5;
        min_eig = min_eig.min(sum.symmetric_eigen().eigenvalues.min());
    }
    pass_if(
        product <= 1e-10 && care <= 1e-9 && sylvester <= 1e-9 && min_eig > 0.0,
        format!("product {product:.1e}, CARE {care:.1e}, Sylvester {sylvester:.1e}, min eig(P1 + Σd) {min_eig:.3e}"),
    )
}

fn criterion_6() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let n = 1 + k % 6;
        let sd = random_spd(n, &mut rng);
        let x = random_sym(n, 3.0, &mut rng);
        let y = random_sym(n, 3.0, &mut rng);
        let d = x.sub(&y).frobenius();
        if d > 0.0 {
            worst = worst.max(care_map(&x, &sd).sub(&care_map(&y, &sd)).frobenius() / d);
        }
    }
    pass_if(worst <= 1.0 + 1e-12, format!("largest ratio {worst:.12}"))
}

fn random_context(n: usize, rng: &mut ChaCha8Rng) -> MapContext {
    let cfg = SolverConfig::default();
    loop {
        let problem = SteeringProblem {
            system: random_lti(n, n, rng),
            t0: 0.0,
            t1: 1.0,
            sigma0: random_spd(n, rng),
            sigmad: random_spd(n, rng),
            mu0: None,
            mud: None,
        };
        if let Ok(ctx) = MapContext::for_problem(&problem, &cfg) {
            return ctx;
        }
    }
}

fn criterion_7() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let contexts: Vec<MapContext> = (1..=6).map(|n| random_context(n, &mut rng)).collect();
    let (mut f2_worst, mut f4_worst) = (0.0f64, 0.0f64);
    let (mut evaluated, mut singular) = (0, 0);
    while evaluated < 500 {
        let ctx = &contexts[evaluated % 6];
        let x = random_sym(ctx.blocks.n, 3.0, &mut rng);
        match (f2_raw(ctx, &x), f4_raw(ctx, &x)) {
            (Ok(a), Ok(b)) => {
                f2_worst = f2_worst.max(sym_err(&a.value));
                f4_worst = f4_worst.max(sym_err(&b.value));
                evaluated += 1;
            }
            _ => singular += 1,
        }
    }
    pass_if(
        f2_worst <= 1e-9 && f4_worst <= 1e-9,
        format!("F2 {f2_worst:.1e}, F4 {f4_worst:.1e} over {evaluated} inputs ({singular} singular draws skipped)"),
    )
}

/// Optimal `P0` of `ẋ = u + w` on [0, 1] by bisection. The costate is
/// `p/(1 − pt)` and `Σ(1) = (1 − p)²σ0 + (1 − p)`; the terminal condition
/// `P(1) = Σ(1) − σd` has a unique root for `p < 1`.
fn free_particle_oracle(sigma0: f64, sigmad: f64) -> f64 {
    let g = |p: f64| (1.0 - p).powi(2) * sigma0 + (1.0 - p) - sigmad - p / (1.0 - p);
    let (mut lo, mut hi) = (-1.0, 1.0 - 1e-9);
    while g(lo) <= 0.0 {
        lo *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn criterion_8() -> Verdict {
    let cfg = SolverConfig {
        tol: 1e-13,
        max_iter: 20_000,
        ..SolverConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let (s0, sd) = (rng.random_range(0.1..5.0), rng.random_range(0.1..5.0));
        let problem = SteeringProblem {
            system: LtvSystem::lti(dmatrix![0.0], dmatrix![1.0], SymmetricMatrix::zeros(1)).unwrap(),
            t0: 0.0,
            t1: 1.0,
            sigma0: SymmetricMatrix::from_diagonal(&[s0]),
            sigmad: SymmetricMatrix::from_diagonal(&[sd]),
            mu0: None,
            mud: None,
        };
        let ctx = MapContext::for_problem(&problem, &cfg).map_err(|e| e.to_string())?;
        let fp = solve_fixed_point(&ctx, &cfg).map_err(|e| e.to_string())?;
        worst = worst.max((fp.p0.as_mat()[(0, 0)] - free_particle_oracle(s0, sd)).abs());
    }
    pass_if(worst <= 1e-10, format!("largest deviation from bisection {worst:.1e}"))
}

fn transversality(problem: &SteeringProblem, cfg: &SolverConfig) -> Result<f64, String> {
    let solved = covsteer::solve(problem, cfg).map_err(|e| e.to_string())?;
    let s = &solved.solution;
    let last = s.grid.len() - 1;
    Ok(frobenius_norm(&(s.p[last].as_mat() - (s.sigma[last].as_mat() - problem.sigmad.as_mat()))))
}

fn criterion_9() -> Verdict {
    let cw_cfg = SolverConfig {
        max_iter: 2000,
        ..SolverConfig::default()
    };
    let cases = [
        ("double-integrator", make_double_integrator(), SolverConfig::default()),
        ("cw", make_clohessy_wiltshire(), cw_cfg),
    ];
    let mut ok = true;
    let mut details = Vec::new();
    for (name, problem, cfg) in cases {
        let coarse = transversality(&problem, &cfg)?;
        let doubled = SolverConfig {
            grid_steps: 2 * cfg.grid_steps,
            ..cfg
        };
        let fine = transversality(&problem, &doubled)?;
        let ratio = coarse / fine;
        ok &= coarse <= 1e-4 && ratio >= 5.0;
        details.push(format!("{name}: {coarse:.2e} -> {fine:.2e} ({ratio:.2}x, need 5x)"));
    }
    pass_if(ok, details.join("; "))
}

fn criterion_10() -> Verdict {
    let problem = make_double_integrator();
    let solved = covsteer::solve(&problem, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let mut opts = SimOptions::new(10_000, 5e-4, 10, problem.t0, problem.t1);
    opts.stored_paths = 0;
    let batch = simulate(&problem, &solved.solution, &opts).map_err(|e| e.to_string())?;
    let finals = batch.checkpoint_states.last().ok_or("no checkpoints")?;
    let count = finals.len() as f64;
    let mean = finals.iter().fold(DVector::zeros(2), |acc, x| acc + x) / count;
    let cov = finals
        .iter()
        .fold(DMatrix::zeros(2, 2), |acc, x| acc + (x - &mean) * (x - &mean).transpose())
        / (count - 1.0);
    let predicted = solved.solution.terminal_sigma().as_mat();
    let rel = frobenius_norm(&(cov - predicted)) / frobenius_norm(predicted);
    pass_if(rel <= 0.1, format!("relative error {rel:.4} with {} paths", finals.len()))
}

fn criterion_11() -> Verdict {
    let problem = make_double_integrator();
    let solved = covsteer::solve(&problem, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let s = &solved.solution;
    let optimal = objective_for_gains(&problem, &s.k, &s.grid).map_err(|e| e.to_string())?;
    let b = problem.system.eval(problem.t0).map_err(|e| e.to_string())?.b;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut closest = f64::INFINITY;
    for _ in 0..20 {
        // gain direction −BᵀΔP with ΔP symmetric and linear in time
        let (start, end) = (random_sym(2, 1.0, &mut rng), random_sym(2, 1.0, &mut rng));
        let span = problem.t1 - problem.t0;
        let perturbed: Vec<DMatrix<f64>> = s
            .grid
            .iter()
            .zip(&s.k)
            .map(|(&t, k)| {
                let w = (t - problem.t0) / span;
                let dp = start.as_mat() * (1.0 - w) + end.as_mat() * w;
                k - b.transpose() * dp * 1e-2
            })
            .collect();
        let value = objective_for_gains(&problem, &perturbed, &s.grid).map_err(|e| e.to_string())?;
        closest = closest.min(value - optimal);
    }
    pass_if(
        closest >= -1e-9,
        format!("optimal {optimal:.8}; smallest increase over 20 perturbations {closest:.3e}"),
    )
}

fn criterion_12() -> Verdict {
    let plain_problem = make_double_integrator();
    let plain = covsteer::solve(&plain_problem, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    let mut same_gains = true;
    for _ in 0..5 {
        let mut problem = plain_problem.clone();
        let mud = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
        problem.mu0 = Some(DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0)));
        problem.mud = Some(mud.clone());
        let solved = covsteer::solve(&problem, &SolverConfig::default()).map_err(|e| e.to_string())?;
        let s = &solved.solution;
        same_gains &= s.k == plain.solution.k;
        let last = s.grid.len() - 1;
        let (mu, z) = (s.mu.as_ref().ok_or("no mean")?, s.z.as_ref().ok_or("no mean costate")?);
        worst = worst.max((&z[last] - (&mu[last] - &mud)).norm());
    }
    pass_if(
        worst <= 1e-8 && same_gains,
        format!("terminal residual {worst:.1e}; gains bitwise unchanged: {same_gains}"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("double-integrator reproduction", criterion_1),
        ("Clohessy-Wiltshire reproduction", criterion_2),
        ("fixed-point uniqueness over 100 starts", criterion_3),
        ("transition identities and grid refinement", criterion_4),
        ("CARE map terminal conditions", criterion_5),
        ("CARE map nonexpansive", criterion_6),
        ("LFT symmetry before symmetrization", criterion_7),
        ("scalar bisection oracle", criterion_8),
        ("transversality and grid refinement", criterion_9),
        ("Monte Carlo terminal covariance", criterion_10),
        ("local optimality under gain perturbation", criterion_11),
        ("mean steering", criterion_12),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match verdict {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {:>2} {name}: {detail} [{secs:.2} s]", i + 1);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
