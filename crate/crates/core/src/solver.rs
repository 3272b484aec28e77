//! Fixed-point recursion `P0 ← F(P0)` with random restarts.

use nalgebra::DMatrix;
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lft::{composite_chain, composite_f, MapContext};
use crate::matcore::{unvech, vech, vech_len, SymmetricMatrix};
use crate::model::{ConvergenceCriterion, SolverConfig};

/// Record of one recursion run.
///
/// `iterates[k]` is the iterate produced by step `k + 1` and `errors[k]` the
/// size of that step.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RecursionTrace {
    pub initial: Vec<f64>,
    pub iterates: Vec<Vec<f64>>,
    pub errors: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub retries: usize,
    pub seed_used: u64,
}

#[derive(Clone, Debug)]
pub struct FixedPointResult {
    pub p0: SymmetricMatrix,
    pub h0: SymmetricMatrix,
    pub h1: SymmetricMatrix,
    pub p1: SymmetricMatrix,
    pub trace: RecursionTrace,
}

/// Symmetric matrix whose `vech` entries are i.i.d. uniform on
/// `[−half_width, half_width]`.
pub fn random_init(n: usize, half_width: f64, seed: u64) -> SymmetricMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(-half_width, half_width).expect("finite positive half width");
    let v: Vec<f64> = (0..vech_len(n)).map(|_| dist.sample(&mut rng)).collect();
    unvech(&v, n).expect("length matches")
}

pub fn step_size(diff: &DMatrix<f64>, criterion: ConvergenceCriterion) -> f64 {
    match criterion {
        ConvergenceCriterion::Frobenius => diff.iter().map(|x| x * x).sum::<f64>().sqrt(),
        ConvergenceCriterion::Componentwise => diff.iter().fold(0.0, |m, x| m.max(x.abs())),
    }
}

/// Iterates from `init` until the step drops to `cfg.tol` or `cfg.max_iter`
/// steps have been taken. Singular maps are returned as errors; a run that
/// merely fails to converge comes back with `converged == false`.
pub fn iterate_from(
    ctx: &MapContext,
    cfg: &SolverConfig,
    init: &SymmetricMatrix,
    seed: u64,
) -> Result<(SymmetricMatrix, RecursionTrace)> {
    let mut trace = RecursionTrace {
        initial: vech(init),
        iterates: Vec::new(),
        errors: Vec::new(),
        converged: false,
        iterations: 0,
        retries: 0,
        seed_used: seed,
    };
    let mut x = init.clone();
    while trace.iterations < cfg.max_iter {
        let next = composite_f(ctx, &x)?;
        let err = step_size(&(next.as_mat() - x.as_mat()), cfg.criterion);
        trace.iterates.push(vech(&next));
        trace.errors.push(err);
        trace.iterations += 1;
        x = next;
        if err <= cfg.tol {
            trace.converged = true;
            break;
        }
    }
    Ok((x, trace))
}

fn finish(ctx: &MapContext, p0: SymmetricMatrix, trace: RecursionTrace) -> Result<FixedPointResult> {
    let chain = composite_chain(ctx, &p0)?;
    Ok(FixedPointResult {
        p0,
        h0: chain.h0,
        h1: chain.h1,
        p1: chain.p1,
        trace,
    })
}

/// Runs the recursion from a seeded random start, restarting with seed
/// `cfg.seed + k` whenever a map is singular along the way.
pub fn solve_fixed_point(ctx: &MapContext, cfg: &SolverConfig) -> Result<FixedPointResult> {
    cfg.check()?;
    for attempt in 0..=cfg.max_retries {
        let seed = cfg.seed.wrapping_add(attempt as u64);
        let init = random_init(ctx.n(), cfg.init_box_half_width, seed);
        match iterate_from(ctx, cfg, &init, seed) {
            Ok((p0, mut trace)) => {
                trace.retries = attempt;
                if !trace.converged {
                    return Err(Error::MaxIterExceeded { trace: Box::new(trace) });
                }
                return finish(ctx, p0, trace);
            }
            Err(Error::LftSingular { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::RetriesExhausted {
        retries: cfg.max_retries,
    })
}

/// Outcome of one run of a basin scan.
#[derive(Clone, Debug)]
pub struct BasinRun {
    pub seed: u64,
    pub init: SymmetricMatrix,
    pub converged: bool,
    pub iterations: usize,
    pub fixed_point: Option<SymmetricMatrix>,
    pub failure: Option<String>,
}

/// Runs the recursion without restarts from `num_inits` seeds
/// `cfg.seed, cfg.seed + 1, ...`, in parallel. Results are ordered by seed.
pub fn basin_scan(ctx: &MapContext, cfg: &SolverConfig, num_inits: usize) -> Vec<BasinRun> {
    (0..num_inits)
        .into_par_iter()
        .map(|k| {
            let seed = cfg.seed.wrapping_add(k as u64);
            let init = random_init(ctx.n(), cfg.init_box_half_width, seed);
            match iterate_from(ctx, cfg, &init, seed) {
                Ok((p0, trace)) => BasinRun {
                    seed,
                    init,
                    converged: trace.converged,
                    iterations: trace.iterations,
                    fixed_point: trace.converged.then_some(p0),
                    failure: (!trace.converged).then(|| "iteration limit reached".to_string()),
                },
                Err(e) => BasinRun {
                    seed,
                    init,
                    converged: false,
                    iterations: 0,
                    fixed_point: None,
                    failure: Some(e.to_string()),
                },
            }
        })
        .collect()
}
