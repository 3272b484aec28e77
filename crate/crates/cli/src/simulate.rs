use std::io::Write;

use covsteer::export::{checkpoint_report, paths_csv, SolutionFile};
use covsteer::{simulate, SimOptions, SteeringProblem, SteeringSolution};

use crate::args::SimulateArgs;
use crate::error::{exit, CliError};
use crate::output::{read_file, Outputs};
use crate::solve::load;

pub const PATHS_FILE: &str = "paths.csv";
pub const CHECKPOINTS_FILE: &str = "checkpoints.json";

pub(crate) struct SimulationRequest {
    pub num_paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub stored_paths: usize,
}

/// Simulates and writes `paths.csv` and `checkpoints.json`; returns the
/// relative covariance error at each checkpoint.
pub(crate) fn simulate_into(
    problem: &SteeringProblem,
    solution: &SteeringSolution,
    req: &SimulationRequest,
    outputs: &mut Outputs,
) -> Result<Vec<(f64, Option<f64>)>, CliError> {
    if req.num_paths == 0 {
        return Err(CliError::Invalid("need at least one path".into()));
    }
    if !(req.dt > 0.0 && req.dt.is_finite()) {
        return Err(CliError::Invalid(format!("time step must be positive, got {}", req.dt)));
    }
    let mut opts = SimOptions::new(req.num_paths, req.dt, req.seed, problem.t0, problem.t1);
    opts.stored_paths = req.stored_paths.min(req.num_paths);
    let batch = outputs
        .time("simulation", || simulate(problem, solution, &opts))
        .map_err(CliError::Solve)?;
    outputs.write(PATHS_FILE, &paths_csv(&batch))?;
    let report = checkpoint_report(&batch, solution);
    let json = covsteer::json::to_string_pretty(&report).map_err(CliError::Solve)?;
    outputs.write(CHECKPOINTS_FILE, &json)?;
    Ok(report.checkpoints.iter().map(|c| (c.t, c.relative_error)).collect())
}

pub fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if args.paths == 0 {
        return Err(CliError::Invalid("--paths must be at least 1".into()));
    }
    let (problem, _, hash) = load(&args.problem)?;
    let bytes = read_file(&args.solution)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| CliError::Invalid(format!("{}: {e}", args.solution.display())))?;
    let file = SolutionFile::parse(text).map_err(|e| CliError::load(&args.solution, e))?;
    if let Some(expected) = &file.problem_hash {
        if expected != &hash {
            return Err(CliError::Invalid(format!(
                "solution was computed for problem {expected}, but {} hashes to {hash}",
                args.problem.display()
            )));
        }
    }
    let solution = file.to_solution().map_err(|e| CliError::load(&args.solution, e))?;
    if solution.sigma.first().map(|s| s.dim()) != Some(problem.system.n()) {
        return Err(CliError::Invalid("solution and problem dimensions differ".into()));
    }

    let mut outputs = Outputs::create(&args.out)?;
    let req = SimulationRequest {
        num_paths: args.paths,
        dt: args.dt,
        seed: args.seed,
        stored_paths: args.store_paths,
    };
    let result = simulate_into(&problem, &solution, &req, &mut outputs);
    let code = result.as_ref().map_or_else(CliError::exit_code, |_| exit::OK);
    outputs.finish("simulate", Some(hash), None, code)?;
    for (t, err) in result? {
        match err {
            Some(e) => {
                let _ = writeln!(out, "t = {t:.6}: sample covariance relative error {e:.4}");
            }
            None => {
                let _ = writeln!(out, "t = {t:.6}: too few paths for a sample covariance");
            }
        }
    }
    let _ = writeln!(out, "wrote {}", args.out.display());
    Ok(())
}
