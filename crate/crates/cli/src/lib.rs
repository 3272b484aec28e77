//! Command-line front end: `solve`, `simulate`, `verify` and `demo`.
//!
//! Every command writes static files into an output directory and finishes
//! with a `manifest.json` listing them. Exit codes are in [`exit`].

pub mod args;
pub mod demo;
mod error;
pub mod output;
pub mod simulate;
pub mod solve;
pub mod verify;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

pub use args::{Cli, Command};
pub use demo::{cmd_demo, run_demo, DemoSummary};
pub use error::{exit, CliError};
pub use output::RunManifest;
pub use simulate::cmd_simulate;
pub use solve::cmd_solve;
pub use verify::{cmd_verify, verify_problem, VerifyReport};

pub const SEED_ENV: &str = "COVSTEER_SEED";

/// Parses `args` (program name first), applies the seed override and runs
/// the command. Returns the process exit code.
pub fn run<I, T>(args: I, env_seed: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{e}");
            return e.exit_code();
        }
    };
    let seed = match env_seed.map(str::parse::<u64>).transpose() {
        Ok(seed) => seed,
        Err(e) => {
            let _ = writeln!(err, "error: {SEED_ENV} is not an unsigned integer: {e}");
            return exit::INVALID_INPUT;
        }
    };
    let result = match cli.command {
        Command::Solve(mut a) => {
            a.seed = seed.or(a.seed);
            cmd_solve(&a, out)
        }
        Command::Simulate(mut a) => {
            a.seed = seed.unwrap_or(a.seed);
            cmd_simulate(&a, out)
        }
        Command::Verify(mut a) => {
            a.seed = seed.unwrap_or(a.seed);
            cmd_verify(&a, out)
        }
        Command::Demo(a) => cmd_demo(&a, out),
    };
    match result {
        Ok(()) => exit::OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
