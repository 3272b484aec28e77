//! Reproduction of the two built-in examples with plot-ready outputs.

use std::f64::consts::TAU;
use std::io::Write;
use std::path::Path;

use covsteer::export::covariance_at;
use covsteer::json::fmt_f64;
use covsteer::matcore::{principal_sqrt, SpdMatrix, SymmetricMatrix};
use covsteer::model::{clohessy_wiltshire_reference_sigma1, double_integrator_reference_sigma1};
use covsteer::problem_file::ProblemFile;
use covsteer::{make_clohessy_wiltshire, make_double_integrator, SolverConfig, SteeringProblem, SteeringSolution};
use nalgebra::DVector;
use serde::Serialize;

use crate::args::DemoArgs;
use crate::error::{exit, CliError};
use crate::output::Outputs;
use crate::simulate::{simulate_into, SimulationRequest};
use crate::solve::{load, solve_into};
use crate::verify::{verify_problem, VERIFY_FILE};

pub const DEMO_NAMES: [&str; 2] = ["double-integrator", "cw"];
pub const PROBLEM_FILE: &str = "problem.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const ELLIPSE_FILE: &str = "ellipses.csv";
pub const TARGET_ELLIPSE_FILE: &str = "target_ellipse.csv";
pub const MARGINALS_FILE: &str = "marginals.json";

pub const DEMO_PATHS: usize = 5;
pub const DEMO_DT: f64 = 5e-4;
pub const DEMO_SEED: u64 = 7;
pub const ELLIPSE_SNAPSHOTS: usize = 500;
pub const ELLIPSE_POINTS: usize = 64;
const VERIFY_PROBES: usize = 200;

/// A built-in example: the problem, its solver settings, and the reference
/// terminal covariance with the tolerance it is compared at.
pub struct Demo {
    pub problem: SteeringProblem,
    pub config: SolverConfig,
    pub reference: SymmetricMatrix,
    pub tolerance: f64,
}

pub fn demo(name: &str) -> Option<Demo> {
    match name {
        "double-integrator" => Some(Demo {
            problem: make_double_integrator(),
            config: SolverConfig::default(),
            reference: double_integrator_reference_sigma1(),
            tolerance: 5e-3,
        }),
        // this example contracts slowly and needs several hundred iterations
        "cw" => Some(Demo {
            problem: make_clohessy_wiltshire(),
            config: SolverConfig {
                max_iter: 2000,
                ..SolverConfig::default()
            },
            reference: clohessy_wiltshire_reference_sigma1(),
            tolerance: 1e-2,
        }),
        _ => None,
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DemoSummary {
    pub name: String,
    pub iterations: usize,
    pub retries: usize,
    pub reference_sigma1: Vec<Vec<f64>>,
    pub computed_sigma1: Vec<Vec<f64>>,
    /// Largest entrywise `|computed − reference|`.
    pub max_deviation: f64,
    pub tolerance: f64,
    pub within_tolerance: bool,
    pub terminal_cost: f64,
    pub running_cost: f64,
    pub total_cost: f64,
    pub transversality_residual: f64,
    pub verify_passed: bool,
    pub verify_failures: usize,
}

fn lerp_vectors(grid: &[f64], values: &[DVector<f64>], t: f64) -> DVector<f64> {
    let last = grid.len() - 1;
    let hi = grid.partition_point(|&g| g <= t).clamp(1, last);
    let lo = hi - 1;
    let w = ((t - grid[lo]) / (grid[hi] - grid[lo])).clamp(0.0, 1.0);
    &values[lo] * (1.0 - w) + &values[hi] * w
}

fn snapshot_times(t0: f64, t1: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|j| if j + 1 == count { t1 } else { t0 + (t1 - t0) * j as f64 / (count - 1) as f64 })
        .collect()
}

fn ellipse_rows(out: &mut String, snapshot: usize, t: f64, center: &DVector<f64>, cov: &SymmetricMatrix) -> Result<(), CliError> {
    let root = principal_sqrt(&SpdMatrix::try_new(cov.clone()).map_err(CliError::Solve)?);
    for k in 0..ELLIPSE_POINTS {
        let theta = TAU * k as f64 / ELLIPSE_POINTS as f64;
        let x = center + root.as_mat() * DVector::from_column_slice(&[theta.cos(), theta.sin()]);
        out.push_str(&format!(
            "{snapshot},{},{k},{},{},{}\n",
            fmt_f64(t),
            fmt_f64(theta),
            fmt_f64(x[0]),
            fmt_f64(x[1])
        ));
    }
    Ok(())
}

/// One-sigma covariance ellipses at evenly spaced times, centred on the
/// predicted mean.
pub fn ellipse_csv(problem: &SteeringProblem, sol: &SteeringSolution) -> Result<String, CliError> {
    let mut out = String::from("snapshot,t,k,theta,x1,x2\n");
    for (j, t) in snapshot_times(problem.t0, problem.t1, ELLIPSE_SNAPSHOTS).into_iter().enumerate() {
        let center = match &sol.mu {
            Some(mu) => lerp_vectors(&sol.grid, mu, t),
            None => DVector::zeros(2),
        };
        ellipse_rows(&mut out, j, t, &center, &covariance_at(sol, t))?;
    }
    Ok(out)
}

pub fn target_ellipse_csv(problem: &SteeringProblem) -> Result<String, CliError> {
    let mut out = String::from("snapshot,t,k,theta,x1,x2\n");
    let center = problem.mud.clone().unwrap_or_else(|| DVector::zeros(2));
    ellipse_rows(&mut out, 0, problem.t1, &center, &problem.sigmad)?;
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct Marginals {
    /// State indices (0-based) of each marginal block.
    groups: Vec<Vec<usize>>,
    target: Vec<Vec<Vec<f64>>>,
    checkpoints: Vec<MarginalCheckpoint>,
}

#[derive(Clone, Debug, Serialize)]
struct MarginalCheckpoint {
    t: f64,
    marginals: Vec<Vec<Vec<f64>>>,
}

fn marginal(cov: &SymmetricMatrix, group: &[usize]) -> Vec<Vec<f64>> {
    group
        .iter()
        .map(|&i| group.iter().map(|&j| cov.as_mat()[(i, j)]).collect())
        .collect()
}

/// Consecutive 3×3 marginal covariances at the start, middle and end.
pub fn marginals_json(problem: &SteeringProblem, sol: &SteeringSolution) -> Result<String, CliError> {
    let n = problem.system.n();
    let groups: Vec<Vec<usize>> = (0..n).collect::<Vec<_>>().chunks(3).map(<[usize]>::to_vec).collect();
    let checkpoints = [problem.t0, 0.5 * (problem.t0 + problem.t1), problem.t1]
        .into_iter()
        .map(|t| {
            let cov = covariance_at(sol, t);
            MarginalCheckpoint {
                t,
                marginals: groups.iter().map(|g| marginal(&cov, g)).collect(),
            }
        })
        .collect();
    let doc = Marginals {
        target: groups.iter().map(|g| marginal(&problem.sigmad, g)).collect(),
        groups,
        checkpoints,
    };
    covsteer::json::to_string_pretty(&doc).map_err(CliError::Solve)
}

fn run(demo: &Demo, name: &str, outputs: &mut Outputs, out: &mut dyn Write) -> Result<(DemoSummary, String, SolverConfig), CliError> {
    let file = ProblemFile::from_problem(&demo.problem, Some(demo.config.clone()));
    let problem_path = outputs.write(PROBLEM_FILE, &file.to_json().map_err(CliError::Solve)?)?;
    let (problem, cfg, hash) = load(&problem_path)?;

    let solved = solve_into(&problem, &cfg, &hash, outputs)?;
    let sol = &solved.solution;
    let req = SimulationRequest {
        num_paths: DEMO_PATHS,
        dt: DEMO_DT,
        seed: DEMO_SEED,
        stored_paths: DEMO_PATHS,
    };
    simulate_into(&problem, sol, &req, outputs)?;

    let report = outputs.time("verify", || verify_problem(&problem, &cfg, VERIFY_PROBES, DEMO_SEED))?;
    let json = covsteer::json::to_string_pretty(&report).map_err(CliError::Solve)?;
    outputs.write(VERIFY_FILE, &json)?;
    let _ = write!(out, "{}", report.table());

    if problem.system.n() == 2 {
        outputs.write(ELLIPSE_FILE, &ellipse_csv(&problem, sol)?)?;
        outputs.write(TARGET_ELLIPSE_FILE, &target_ellipse_csv(&problem)?)?;
    } else {
        outputs.write(MARGINALS_FILE, &marginals_json(&problem, sol)?)?;
    }

    let computed = sol.terminal_sigma();
    let max_deviation = (computed.as_mat() - demo.reference.as_mat()).amax();
    let summary = DemoSummary {
        name: name.to_string(),
        iterations: solved.trace.iterations,
        retries: solved.trace.retries,
        reference_sigma1: demo.reference.to_rows(),
        computed_sigma1: computed.to_rows(),
        max_deviation,
        tolerance: demo.tolerance,
        within_tolerance: max_deviation <= demo.tolerance,
        terminal_cost: sol.terminal_cost,
        running_cost: sol.running_cost,
        total_cost: sol.total_cost(),
        transversality_residual: sol.transversality_residual,
        verify_passed: report.passed,
        verify_failures: report.failures(),
    };
    let json = covsteer::json::to_string_pretty(&summary).map_err(CliError::Solve)?;
    outputs.write(SUMMARY_FILE, &json)?;
    Ok((summary, hash, cfg))
}

/// Runs a demo into `dir` and returns its summary.
pub fn run_demo(name: &str, dir: &Path, out: &mut dyn Write) -> Result<DemoSummary, CliError> {
    let demo = demo(name).ok_or_else(|| {
        CliError::Invalid(format!("unknown demo '{name}' (expected one of: {})", DEMO_NAMES.join(", ")))
    })?;
    let mut outputs = Outputs::create(dir)?;
    let result = run(&demo, name, &mut outputs, out);
    let code = match &result {
        Ok((s, _, _)) if !s.verify_passed => exit::CHECK_FAILED,
        Ok(_) => exit::OK,
        Err(e) => e.exit_code(),
    };
    let (summary, hash, cfg) = match result {
        Ok(v) => v,
        Err(e) => {
            outputs.finish("demo", None, None, code)?;
            return Err(e);
        }
    };
    outputs.finish("demo", Some(hash), Some(cfg), code)?;
    if summary.verify_passed {
        Ok(summary)
    } else {
        Err(CliError::ChecksFailed {
            failed: summary.verify_failures,
        })
    }
}

pub fn cmd_demo(args: &DemoArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let s = run_demo(&args.name, &args.out, out)?;
    let _ = writeln!(
        out,
        "{}: converged in {} iterations; max entrywise deviation of Σ(t1) from the reference matrix {:.3e} (tolerance {:.0e}, {})",
        s.name,
        s.iterations,
        s.max_deviation,
        s.tolerance,
        if s.within_tolerance { "within" } else { "EXCEEDED" }
    );
    let _ = writeln!(out, "wrote {}", args.out.display());
    Ok(())
}
