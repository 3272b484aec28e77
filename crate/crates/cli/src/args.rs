use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use covsteer::ConvergenceCriterion;

#[derive(Debug, Parser)]
#[command(name = "covsteer", version, about = "Covariance steering for linear stochastic systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a problem file and write the optimal controller.
    Solve(SolveArgs),
    /// Monte Carlo simulation of a solved problem.
    Simulate(SimulateArgs),
    /// Check the numerical identities the solver relies on.
    Verify(VerifyArgs),
    /// Reproduce a built-in example (double-integrator or cw).
    Demo(DemoArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CriterionArg {
    Frobenius,
    Componentwise,
}

impl From<CriterionArg> for ConvergenceCriterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Frobenius => ConvergenceCriterion::Frobenius,
            CriterionArg::Componentwise => ConvergenceCriterion::Componentwise,
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub problem: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub grid_steps: Option<usize>,
    /// Seed of the random initial guess (COVSTEER_SEED takes precedence).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Half width of the box the initial guess is drawn from.
    #[arg(long)]
    pub init_box: Option<f64>,
    #[arg(long, value_enum)]
    pub criterion: Option<CriterionArg>,
    /// Integrate the costate on a twice-finer grid.
    #[arg(long)]
    pub fine_costate_grid: bool,
}

#[derive(Clone, Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub solution: PathBuf,
    #[arg(long)]
    pub problem: PathBuf,
    #[arg(long)]
    pub paths: usize,
    #[arg(long, default_value_t = 5e-4)]
    pub dt: f64,
    /// COVSTEER_SEED takes precedence.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// How many full paths to write to paths.csv; checkpoint statistics
    /// always use every path.
    #[arg(long, default_value_t = 100)]
    pub store_paths: usize,
}

#[derive(Clone, Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub problem: PathBuf,
    /// Overrides the problem file's grid size.
    #[arg(long)]
    pub grid_steps: Option<usize>,
    /// Number of random probe inputs per map check.
    #[arg(long, default_value_t = 200)]
    pub probes: usize,
    /// Seed of the probe inputs (COVSTEER_SEED takes precedence).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write verify.json and a manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Args)]
pub struct DemoArgs {
    pub name: String,
    #[arg(long)]
    pub out: PathBuf,
}
