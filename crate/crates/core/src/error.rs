use thiserror::Error;

use crate::model::Violation;
use crate::solver::RecursionTrace;

/// Which link of the composite map failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    /// H0 -> H1, the forward LFT.
    F2,
    /// P1 -> P0, the backward LFT.
    F4,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Stage::F2 => f.write_str("F2"),
            Stage::F4 => f.write_str("F4"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite entry in {what}")]
    NonFinite { what: &'static str },

    #[error("asymmetry {asymmetry:.3e} exceeds tolerance {tol:.3e}")]
    Asymmetry { asymmetry: f64, tol: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("time {t} outside horizon [{t0}, {t1}]")]
    OutOfHorizon { t: f64, t0: f64, t1: f64 },

    #[error("state transition identities violated: residuals {residuals:?} > {tol:.1e}")]
    StmIdentityViolation { residuals: [f64; 6], tol: f64 },

    #[error("state transition block {block} is numerically singular (rcond {rcond:.3e})")]
    SingularBlock { block: &'static str, rcond: f64 },

    #[error("integrated STM disagrees with matrix exponential by {difference:.3e}")]
    ExpmMismatch { difference: f64 },

    #[error("LFT {stage} denominator is numerically singular (rcond {rcond:.3e})")]
    LftSingular { stage: Stage, rcond: f64 },

    #[error("fixed-point recursion did not reach tolerance within {} iterations", .trace.iterations)]
    MaxIterExceeded { trace: Box<RecursionTrace> },

    #[error("gave up after {retries} singular restarts")]
    RetriesExhausted { retries: usize },

    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("mean boundary value problem is singular (rcond {rcond:.3e})")]
    MeanBvpSingular { rcond: f64 },

    #[error("non-finite sample path {path} at t = {t}")]
    NonFinitePath { path: usize, t: f64 },

    #[error("need at least two paths for a sample covariance, have {0}")]
    TooFewPaths(usize),

    #[error("invalid problem: {}", format_violations(.0))]
    InvalidProblem(Vec<Violation>),

    #[error("{0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| format!("{:?}: {}", x.code, x.message))
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
