//! File formats for solutions, recursion traces, sample paths and
//! checkpoint statistics. Floats are written with 17 significant digits.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json::{self, fmt_f64};
use crate::matcore::{to_rows, unvech, vech, SymmetricMatrix};
use crate::sim::SamplePathBatch;
use crate::solver::RecursionTrace;
use crate::traj::SteeringSolution;

pub const SOLUTION_VERSION: u32 = 1;

/// On-disk form of a solution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SolutionFile {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem_hash: Option<String>,
    pub n: usize,
    pub m: usize,
    pub grid: Vec<f64>,
    /// `vech(P(t_k))` per grid time.
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    /// `vech(Σ(t_k))` per grid time.
    #[serde(rename = "Sigma")]
    pub sigma: Vec<Vec<f64>>,
    /// `K(t_k)` row-major per grid time.
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<Vec<f64>>>,
    pub terminal_cost: f64,
    pub running_cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_terminal_cost: Option<f64>,
    pub total_cost: f64,
    pub transversality_residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recursion: Option<RecursionSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RecursionSummary {
    /// `vech` of the converged `P0`.
    pub p0: Vec<f64>,
    pub iterations: usize,
    pub retries: usize,
    pub seed_used: u64,
    pub final_step: f64,
    /// The six transition-block identity residuals.
    pub stm_residuals: Vec<f64>,
}

fn vectors(v: &Option<Vec<DVector<f64>>>) -> Option<Vec<Vec<f64>>> {
    v.as_ref().map(|v| v.iter().map(|x| x.iter().copied().collect()).collect())
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    to_rows(m).into_iter().flatten().collect()
}

impl SolutionFile {
    pub fn from_solution(sol: &SteeringSolution, problem_hash: Option<String>, recursion: Option<RecursionSummary>) -> Self {
        let n = sol.sigma.first().map_or(0, SymmetricMatrix::dim);
        let m = sol.k.first().map_or(0, DMatrix::nrows);
        SolutionFile {
            version: SOLUTION_VERSION,
            problem_hash,
            n,
            m,
            grid: sol.grid.clone(),
            p: sol.p.iter().map(vech).collect(),
            sigma: sol.sigma.iter().map(vech).collect(),
            k: sol.k.iter().map(row_major).collect(),
            mu: vectors(&sol.mu),
            z: vectors(&sol.z),
            v: vectors(&sol.v),
            terminal_cost: sol.terminal_cost,
            running_cost: sol.running_cost,
            mean_terminal_cost: sol.mean_terminal_cost,
            total_cost: sol.total_cost(),
            transversality_residual: sol.transversality_residual,
            recursion,
        }
    }

    pub fn to_solution(&self) -> Result<SteeringSolution> {
        let len = self.grid.len();
        let check = |found: usize| -> Result<()> {
            if found == len {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { expected: len, found })
            }
        };
        check(self.p.len())?;
        check(self.sigma.len())?;
        check(self.k.len())?;
        let sym = |rows: &Vec<Vec<f64>>| rows.iter().map(|v| unvech(v, self.n)).collect::<Result<Vec<_>>>();
        let k = self
            .k
            .iter()
            .map(|row| {
                if row.len() != self.m * self.n {
                    return Err(Error::DimensionMismatch {
                        expected: self.m * self.n,
                        found: row.len(),
                    });
                }
                Ok(DMatrix::from_row_slice(self.m, self.n, row))
            })
            .collect::<Result<Vec<_>>>()?;
        let vecs = |v: &Option<Vec<Vec<f64>>>| -> Result<Option<Vec<DVector<f64>>>> {
            match v {
                None => Ok(None),
                Some(v) => {
                    check(v.len())?;
                    Ok(Some(v.iter().map(|x| DVector::from_column_slice(x)).collect()))
                }
            }
        };
        Ok(SteeringSolution {
            grid: self.grid.clone(),
            p: sym(&self.p)?,
            sigma: sym(&self.sigma)?,
            k,
            mu: vecs(&self.mu)?,
            z: vecs(&self.z)?,
            v: vecs(&self.v)?,
            terminal_cost: self.terminal_cost,
            running_cost: self.running_cost,
            mean_terminal_cost: self.mean_terminal_cost,
            transversality_residual: self.transversality_residual,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        json::to_string_pretty(self)
    }
}

fn vech_names(prefix: &str, n: usize) -> Vec<String> {
    let mut out = Vec::new();
    for j in 0..n {
        for i in j..n {
            out.push(format!("{prefix}_{}_{}", i + 1, j + 1));
        }
    }
    out
}

fn push_row(out: &mut String, fields: impl IntoIterator<Item = String>) {
    let row: Vec<String> = fields.into_iter().collect();
    out.push_str(&row.join(","));
    out.push('\n');
}

/// One row per grid time: `t`, `vech(P)`, `vech(Σ)`, `K` row-major, then
/// `μ`, `z`, `v` when present.
pub fn solution_csv(sol: &SteeringSolution) -> String {
    let n = sol.sigma.first().map_or(0, SymmetricMatrix::dim);
    let m = sol.k.first().map_or(0, DMatrix::nrows);
    let mut header = vec!["t".to_string()];
    header.extend(vech_names("P", n));
    header.extend(vech_names("Sigma", n));
    for i in 0..m {
        for j in 0..n {
            header.push(format!("K_{}_{}", i + 1, j + 1));
        }
    }
    if sol.mu.is_some() {
        header.extend((1..=n).map(|i| format!("mu_{i}")));
        header.extend((1..=n).map(|i| format!("z_{i}")));
        header.extend((1..=m).map(|i| format!("v_{i}")));
    }
    let mut out = String::new();
    push_row(&mut out, header);
    for (k, &t) in sol.grid.iter().enumerate() {
        let mut row = vec![fmt_f64(t)];
        row.extend(vech(&sol.p[k]).into_iter().map(fmt_f64));
        row.extend(vech(&sol.sigma[k]).into_iter().map(fmt_f64));
        row.extend(row_major(&sol.k[k]).into_iter().map(fmt_f64));
        for series in [&sol.mu, &sol.z, &sol.v].into_iter().flatten() {
            row.extend(series[k].iter().copied().map(fmt_f64));
        }
        push_row(&mut out, row);
    }
    out
}

/// `iter, err, vech(P0)...`, one row per recursion step.
pub fn trace_csv(trace: &RecursionTrace) -> String {
    let len = trace.initial.len();
    let mut out = String::new();
    let mut header = vec!["iter".to_string(), "err".to_string()];
    header.extend((1..=len).map(|i| format!("p0_{i}")));
    push_row(&mut out, header);
    for (k, (err, it)) in trace.errors.iter().zip(&trace.iterates).enumerate() {
        let mut row = vec![(k + 1).to_string(), fmt_f64(*err)];
        row.extend(it.iter().copied().map(fmt_f64));
        push_row(&mut out, row);
    }
    out
}

/// `path, t, x1..xn, u1..um` for every stored path and time step.
pub fn paths_csv(batch: &SamplePathBatch) -> String {
    let n = batch.sample_mean.first().map_or(0, DVector::len);
    let m = batch.inputs.first().and_then(|p| p.first()).map_or(0, DVector::len);
    let mut out = String::new();
    let mut header = vec!["path".to_string(), "t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=m).map(|i| format!("u{i}")));
    push_row(&mut out, header);
    for (p, (xs, us)) in batch.states.iter().zip(&batch.inputs).enumerate() {
        for (k, (x, u)) in xs.iter().zip(us).enumerate() {
            let _ = write!(out, "{p},{}", fmt_f64(batch.times[k]));
            for v in x.iter().chain(u.iter()) {
                let _ = write!(out, ",{}", fmt_f64(*v));
            }
            out.push('\n');
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CheckpointReport {
    pub seed: u64,
    pub num_paths: usize,
    pub dt: f64,
    pub checkpoints: Vec<CheckpointEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CheckpointEntry {
    pub t: f64,
    pub step: usize,
    pub sample_mean: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_cov: Option<Vec<Vec<f64>>>,
    /// Covariance predicted by the solution, interpolated to `t`.
    pub predicted_cov: Vec<Vec<f64>>,
    /// `‖sample − predicted‖_F / ‖predicted‖_F`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_error: Option<f64>,
}

/// Solution covariance at `t`, interpolated linearly between grid times.
pub fn covariance_at(sol: &SteeringSolution, t: f64) -> SymmetricMatrix {
    let grid = &sol.grid;
    let last = grid.len() - 1;
    let hi = grid.partition_point(|&g| g <= t).clamp(1, last.max(1)).min(last);
    let lo = hi.saturating_sub(1);
    if lo == hi || t <= grid[lo] {
        return sol.sigma[lo].clone();
    }
    if t >= grid[hi] {
        return sol.sigma[hi].clone();
    }
    let w = (t - grid[lo]) / (grid[hi] - grid[lo]);
    sol.sigma[lo].scale(1.0 - w).add(&sol.sigma[hi].scale(w))
}

pub fn checkpoint_report(batch: &SamplePathBatch, sol: &SteeringSolution) -> CheckpointReport {
    let checkpoints = batch
        .checkpoint_times
        .iter()
        .enumerate()
        .map(|(c, &t)| {
            let step = batch.checkpoint_indices[c];
            let predicted = covariance_at(sol, t);
            let sample = batch.sample_cov.get(c);
            CheckpointEntry {
                t,
                step,
                sample_mean: batch.sample_mean[step].iter().copied().collect(),
                sample_cov: sample.map(SymmetricMatrix::to_rows),
                predicted_cov: predicted.to_rows(),
                relative_error: sample.map(|s| s.sub(&predicted).frobenius() / predicted.frobenius()),
            }
        })
        .collect();
    CheckpointReport {
        seed: batch.seed,
        num_paths: batch.num_paths,
        dt: batch.dt,
        checkpoints,
    }
}
