//! Fixed-horizon covariance steering for linear stochastic systems
//! `dx = A x dt + B u dt + B dw` with running cost `E∫(uᵀu + xᵀQx)dt` and
//! terminal cost `½‖Σ(t1) − Σd‖_F²`.
//!
//! The optimal feedback `u = −BᵀP(t) x` is found by iterating a composite
//! map on the initial costate `P0` to its unique fixed point, after which the
//! costate, covariance and gain trajectories are integrated forward.
//!
//! ```no_run
//! use covsteer::{make_double_integrator, solve, SolverConfig};
//!
//! let problem = make_double_integrator();
//! let solved = solve(&problem, &SolverConfig::default()).unwrap();
//! println!("{:?}", solved.solution.terminal_sigma());
//! ```

// `!(x > y)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod export;
pub mod expm;
pub mod json;
pub mod lft;
pub mod matcore;
pub mod model;
pub mod problem_file;
pub mod sim;
pub mod solver;
pub mod stm;
pub mod traj;

pub use error::{Error, Result, Stage};
pub use lft::MapContext;
pub use matcore::{SpdMatrix, SymmetricMatrix};
pub use model::{
    make_clohessy_wiltshire, make_double_integrator, ConvergenceCriterion, LtvSystem, SolverConfig, SteeringProblem,
    Violation, ViolationCode,
};
pub use sim::{simulate, SamplePathBatch, SimOptions};
pub use solver::{solve_fixed_point, FixedPointResult, RecursionTrace};
pub use stm::StmBlocks;
pub use traj::SteeringSolution;

/// Output of the full pipeline.
#[derive(Clone, Debug)]
pub struct Solved {
    pub context: MapContext,
    pub fixed_point: FixedPointResult,
    pub solution: SteeringSolution,
}

/// Validates the problem, computes the transition blocks, runs the
/// recursion and synthesizes the trajectories.
pub fn solve(problem: &SteeringProblem, cfg: &SolverConfig) -> Result<Solved> {
    cfg.check()?;
    let violations = problem.validate();
    if !violations.is_empty() {
        return Err(Error::InvalidProblem(violations));
    }
    let context = MapContext::for_problem(problem, cfg)?;
    let fixed_point = solve_fixed_point(&context, cfg)?;
    let solution = traj::synthesize(problem, &fixed_point.p0, &context.blocks, cfg)?;
    Ok(Solved {
        context,
        fixed_point,
        solution,
    })
}
