//! Euler–Maruyama Monte Carlo of the closed-loop system
//! `dx = (A + BK)x dt + Bv dt + B dw`.
//!
//! Every path draws from its own ChaCha stream selected by the path index,
//! so a path's values do not depend on how paths are scheduled. Sums over
//! paths are taken in fixed-size chunks combined in chunk order, which keeps
//! the statistics bitwise reproducible under any degree of parallelism.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matcore::{principal_sqrt, SpdMatrix, SymmetricMatrix};
use crate::model::SteeringProblem;
use crate::traj::SteeringSolution;

const CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct SimOptions {
    pub num_paths: usize,
    pub dt: f64,
    pub seed: u64,
    /// Times at which every path's state is kept for covariance estimates.
    pub checkpoints: Vec<f64>,
    /// How many full paths (states and inputs at every step) to keep.
    pub stored_paths: usize,
    /// Set to `false` to drop the diffusion term.
    pub noise: bool,
}

impl SimOptions {
    /// Checkpoints at the start, middle and end of `[t0, t1]`; all paths stored.
    pub fn new(num_paths: usize, dt: f64, seed: u64, t0: f64, t1: f64) -> Self {
        SimOptions {
            num_paths,
            dt,
            seed,
            checkpoints: vec![t0, 0.5 * (t0 + t1), t1],
            stored_paths: num_paths,
            noise: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplePathBatch {
    pub num_paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub times: Vec<f64>,
    /// `states[p][k]` for the first `stored_paths` paths.
    pub states: Vec<Vec<DVector<f64>>>,
    pub inputs: Vec<Vec<DVector<f64>>>,
    pub checkpoint_times: Vec<f64>,
    pub checkpoint_indices: Vec<usize>,
    /// `checkpoint_states[c][p]`: state of path `p` at checkpoint `c`.
    pub checkpoint_states: Vec<Vec<DVector<f64>>>,
    pub sample_mean: Vec<DVector<f64>>,
    pub sample_cov: Vec<SymmetricMatrix>,
}

/// Linear interpolation weights of `t` on an increasing grid.
fn bracket(grid: &[f64], t: f64) -> (usize, usize, f64) {
    let last = grid.len() - 1;
    if last == 0 || t <= grid[0] {
        return (0, 0, 0.0);
    }
    if t >= grid[last] {
        return (last, last, 0.0);
    }
    let hi = grid.partition_point(|&g| g <= t).clamp(1, last);
    let lo = hi - 1;
    (lo, hi, (t - grid[lo]) / (grid[hi] - grid[lo]))
}

fn lerp_mat(values: &[DMatrix<f64>], (lo, hi, w): (usize, usize, f64)) -> DMatrix<f64> {
    &values[lo] * (1.0 - w) + &values[hi] * w
}

fn lerp_vec(values: &[DVector<f64>], (lo, hi, w): (usize, usize, f64)) -> DVector<f64> {
    &values[lo] * (1.0 - w) + &values[hi] * w
}

struct Step {
    acl: DMatrix<f64>,
    b: DMatrix<f64>,
    k: DMatrix<f64>,
    v: Option<DVector<f64>>,
}

struct PathOutput {
    states: Option<Vec<DVector<f64>>>,
    inputs: Option<Vec<DVector<f64>>>,
    checkpoints: Vec<DVector<f64>>,
}

/// Per-chunk state sums and the outputs of each path in the chunk.
type ChunkOutput = (Vec<DVector<f64>>, Vec<PathOutput>);

/// Simulates `opts.num_paths` closed-loop paths under the solution's gains
/// (and feedforward, when the solution steers means).
pub fn simulate(problem: &SteeringProblem, solution: &SteeringSolution, opts: &SimOptions) -> Result<SamplePathBatch> {
    if !(opts.dt > 0.0) || !opts.dt.is_finite() {
        return Err(Error::Format(format!("time step must be positive, got {}", opts.dt)));
    }
    if opts.num_paths == 0 {
        return Err(Error::Format("need at least one path".into()));
    }
    let (t0, t1) = (problem.t0, problem.t1);
    let grid = &solution.grid;
    let slack = 1e-12 * (t1 - t0).abs().max(1.0);
    if grid.len() < 2 || grid[0] > t0 + slack || grid[grid.len() - 1] < t1 - slack {
        return Err(Error::Format("solution grid does not cover the horizon".into()));
    }
    let n = problem.system.n();

    let steps = ((t1 - t0) / opts.dt - 1e-9).ceil().max(1.0) as usize;
    let h = (t1 - t0) / steps as f64;
    let times: Vec<f64> = (0..=steps)
        .map(|k| if k == steps { t1 } else { t0 + (t1 - t0) * k as f64 / steps as f64 })
        .collect();

    let plan = times
        .iter()
        .map(|&t| {
            let mats = problem.eval_system(t)?;
            let w = bracket(grid, t);
            let k = lerp_mat(&solution.k, w);
            let v = solution.v.as_ref().map(|v| lerp_vec(v, w));
            Ok(Step {
                acl: &mats.a + &mats.b * &k,
                b: mats.b,
                k,
                v,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let checkpoint_indices: Vec<usize> = opts
        .checkpoints
        .iter()
        .map(|&c| (((c - t0) / h).round().max(0.0) as usize).min(steps))
        .collect();

    let mean0 = problem.mu0.clone().unwrap_or_else(|| DVector::zeros(n));
    let root = principal_sqrt(&SpdMatrix::try_new(problem.sigma0.clone())?);
    let sqrt_h = h.sqrt();

    let run_path = |p: usize, sum: &mut [DVector<f64>]| -> Result<PathOutput> {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(p as u64);
        let xi = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut x = &mean0 + root.as_mat() * xi;
        let store = p < opts.stored_paths;
        let mut states = store.then(|| Vec::with_capacity(steps + 1));
        let mut inputs = store.then(|| Vec::with_capacity(steps + 1));
        let mut checkpoints = vec![DVector::zeros(n); checkpoint_indices.len()];
        for (k, step) in plan.iter().enumerate() {
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinitePath { path: p, t: times[k] });
            }
            sum[k] += &x;
            for (slot, &c) in checkpoint_indices.iter().enumerate() {
                if c == k {
                    checkpoints[slot] = x.clone();
                }
            }
            if let Some(inputs) = inputs.as_mut() {
                let mut u = &step.k * &x;
                if let Some(v) = &step.v {
                    u += v;
                }
                inputs.push(u);
            }
            if let Some(states) = states.as_mut() {
                states.push(x.clone());
            }
            if k == steps {
                break;
            }
            let mut drift = &step.acl * &x;
            if let Some(v) = &step.v {
                drift += &step.b * v;
            }
            x += drift * h;
            if opts.noise {
                let m = step.b.ncols();
                let dw = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
                x += &step.b * dw * sqrt_h;
            }
        }
        Ok(PathOutput {
            states,
            inputs,
            checkpoints,
        })
    };

    let chunks: Vec<Result<ChunkOutput>> = (0..opts.num_paths.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut sum = vec![DVector::zeros(n); steps + 1];
            let end = ((c + 1) * CHUNK).min(opts.num_paths);
            let outputs = (c * CHUNK..end)
                .map(|p| run_path(p, &mut sum))
                .collect::<Result<Vec<_>>>()?;
            Ok((sum, outputs))
        })
        .collect();

    let mut total = vec![DVector::zeros(n); steps + 1];
    let mut states = Vec::new();
    let mut inputs = Vec::new();
    let mut checkpoint_states = vec![Vec::with_capacity(opts.num_paths); checkpoint_indices.len()];
    for chunk in chunks {
        let (sum, outputs) = chunk?;
        for (acc, s) in total.iter_mut().zip(sum) {
            *acc += s;
        }
        for out in outputs {
            if let Some(s) = out.states {
                states.push(s);
            }
            if let Some(u) = out.inputs {
                inputs.push(u);
            }
            for (c, x) in out.checkpoints.into_iter().enumerate() {
                checkpoint_states[c].push(x);
            }
        }
    }
    let sample_mean: Vec<DVector<f64>> = total.into_iter().map(|s| s / opts.num_paths as f64).collect();
    let sample_cov = if opts.num_paths >= 2 {
        checkpoint_states
            .iter()
            .map(|pts| sample_covariance_of(pts))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };

    Ok(SamplePathBatch {
        num_paths: opts.num_paths,
        dt: h,
        seed: opts.seed,
        times,
        states,
        inputs,
        checkpoint_times: checkpoint_indices.iter().map(|&c| t0 + (t1 - t0) * c as f64 / steps as f64).collect(),
        checkpoint_indices,
        checkpoint_states,
        sample_mean,
        sample_cov,
    })
}

/// Unbiased sample covariance of the states at one checkpoint.
pub fn sample_covariance(batch: &SamplePathBatch, checkpoint: usize) -> Result<SymmetricMatrix> {
    let pts = batch.checkpoint_states.get(checkpoint).ok_or(Error::DimensionMismatch {
        expected: batch.checkpoint_states.len(),
        found: checkpoint,
    })?;
    sample_covariance_of(pts)
}

/// Unbiased sample covariance (normalized by `N − 1`) of a point set.
pub fn sample_covariance_of(points: &[DVector<f64>]) -> Result<SymmetricMatrix> {
    let count = points.len();
    if count < 2 {
        return Err(Error::TooFewPaths(count));
    }
    let n = points[0].len();
    let mean = points.iter().fold(DVector::zeros(n), |acc, x| acc + x) / count as f64;
    let mut cov = DMatrix::zeros(n, n);
    for x in points {
        let d = x - &mean;
        cov += &d * d.transpose();
    }
    Ok(SymmetricMatrix::symmetrized(&(cov / (count - 1) as f64)))
}
