use std::io::Write;
use std::path::Path;

use covsteer::export::{solution_csv, trace_csv, RecursionSummary, SolutionFile};
use covsteer::matcore::vech;
use covsteer::problem_file::ProblemFile;
use covsteer::traj::synthesize;
use covsteer::{solve_fixed_point, Error, MapContext, RecursionTrace, SolverConfig, SteeringProblem};

use crate::args::SolveArgs;
use crate::error::{exit, CliError};
use crate::output::{content_hash, read_file, Outputs};

pub const SOLUTION_FILE: &str = "solution.json";
pub const SOLUTION_CSV: &str = "solution.csv";
pub const TRACE_FILE: &str = "trace.csv";

/// Reads a problem file, returning the problem, its configuration and the
/// hash of its bytes.
pub(crate) fn load(path: &Path) -> Result<(SteeringProblem, SolverConfig, String), CliError> {
    let bytes = read_file(path)?;
    let hash = content_hash(&bytes);
    let text = std::str::from_utf8(&bytes).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    let (problem, cfg) = ProblemFile::parse(text)
        .and_then(|f| f.to_problem())
        .map_err(|e| CliError::load(path, e))?;
    Ok((problem, cfg, hash))
}

/// Rejects an invalid configuration or a problem with validation findings.
pub(crate) fn check_input(problem: &SteeringProblem, cfg: &SolverConfig) -> Result<(), CliError> {
    cfg.check().map_err(|e| CliError::Invalid(e.to_string()))?;
    let violations = problem.validate();
    if violations.is_empty() {
        Ok(())
    } else {
        Err(CliError::solve(Error::InvalidProblem(violations)))
    }
}

fn apply_flags(mut cfg: SolverConfig, args: &SolveArgs) -> SolverConfig {
    if let Some(tol) = args.tol {
        cfg.tol = tol;
    }
    if let Some(max_iter) = args.max_iter {
        cfg.max_iter = max_iter;
    }
    if let Some(steps) = args.grid_steps {
        cfg.grid_steps = steps;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(width) = args.init_box {
        cfg.init_box_half_width = width;
    }
    if let Some(criterion) = args.criterion {
        cfg.criterion = criterion.into();
    }
    if args.fine_costate_grid {
        cfg.fine_costate_grid = true;
    }
    cfg
}

/// What a successful solve produced.
pub(crate) struct SolveOutcome {
    pub solution: covsteer::SteeringSolution,
    pub trace: RecursionTrace,
}

fn empty_trace(seed: u64) -> RecursionTrace {
    RecursionTrace {
        initial: Vec::new(),
        iterates: Vec::new(),
        errors: Vec::new(),
        converged: false,
        iterations: 0,
        retries: 0,
        seed_used: seed,
    }
}

/// Runs the pipeline and writes the solution files. On a recursion failure
/// the trace is still written before the error is returned.
pub(crate) fn solve_into(
    problem: &SteeringProblem,
    cfg: &SolverConfig,
    hash: &str,
    outputs: &mut Outputs,
) -> Result<SolveOutcome, CliError> {
    check_input(problem, cfg)?;
    let ctx = outputs
        .time("stm", || MapContext::for_problem(problem, cfg))
        .map_err(CliError::solve)?;
    let fixed_point = match outputs.time("recursion", || solve_fixed_point(&ctx, cfg)) {
        Ok(fp) => fp,
        Err(Error::MaxIterExceeded { trace }) => {
            outputs.write(TRACE_FILE, &trace_csv(&trace))?;
            return Err(CliError::Solve(Error::MaxIterExceeded { trace }));
        }
        Err(e) => {
            outputs.write(TRACE_FILE, &trace_csv(&empty_trace(cfg.seed)))?;
            return Err(CliError::solve(e));
        }
    };
    let solution = outputs
        .time("synthesis", || synthesize(problem, &fixed_point.p0, &ctx.blocks, cfg))
        .map_err(CliError::solve)?;

    let trace = fixed_point.trace;
    let summary = RecursionSummary {
        p0: vech(&fixed_point.p0),
        iterations: trace.iterations,
        retries: trace.retries,
        seed_used: trace.seed_used,
        final_step: trace.errors.last().copied().unwrap_or(0.0),
        stm_residuals: ctx.blocks.residuals.to_vec(),
    };
    let file = SolutionFile::from_solution(&solution, Some(hash.to_string()), Some(summary));
    outputs.write(SOLUTION_FILE, &file.to_json().map_err(CliError::solve)?)?;
    outputs.write(SOLUTION_CSV, &solution_csv(&solution))?;
    outputs.write(TRACE_FILE, &trace_csv(&trace))?;
    Ok(SolveOutcome { solution, trace })
}

pub fn cmd_solve(args: &SolveArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (problem, cfg, hash) = load(&args.problem)?;
    let cfg = apply_flags(cfg, args);
    check_input(&problem, &cfg)?;
    for w in problem.validation_warnings() {
        let _ = writeln!(out, "warning: {}", w.message);
    }
    let mut outputs = Outputs::create(&args.out)?;
    let result = solve_into(&problem, &cfg, &hash, &mut outputs);
    let code = result.as_ref().map_or_else(CliError::exit_code, |_| exit::OK);
    outputs.finish("solve", Some(hash), Some(cfg), code)?;
    let outcome = result?;
    let _ = writeln!(
        out,
        "converged in {} iterations (retries {}); terminal cost {:.6e}, total cost {:.6e}",
        outcome.trace.iterations,
        outcome.trace.retries,
        outcome.solution.terminal_cost,
        outcome.solution.total_cost()
    );
    let _ = writeln!(out, "wrote {}", args.out.display());
    Ok(())
}
