//! Trajectories downstream of the converged `P0`: costate and covariance
//! flows, feedback gains, optional mean steering, and the objective.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matcore::{asymmetry, frobenius_norm, rcond, SpdMatrix, SymmetricMatrix, SYM_TOL};
use crate::model::{LtvSystem, SolverConfig, SteeringProblem, SystemMatrices};
use crate::stm::{assemble_hamiltonian, StmBlocks};

/// `gridSteps + 1` uniform points from `t0` to `t1`, endpoints exact.
pub fn time_grid(t0: f64, t1: f64, steps: usize) -> Vec<f64> {
    let steps = steps.max(1);
    (0..=steps)
        .map(|k| {
            if k == steps {
                t1
            } else {
                t0 + (t1 - t0) * (k as f64) / steps as f64
            }
        })
        .collect()
}

/// Gridded optimal controller and its predicted statistics.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SteeringSolution {
    pub grid: Vec<f64>,
    #[serde(skip)]
    pub p: Vec<SymmetricMatrix>,
    #[serde(skip)]
    pub sigma: Vec<SymmetricMatrix>,
    #[serde(skip)]
    pub k: Vec<DMatrix<f64>>,
    #[serde(skip)]
    pub mu: Option<Vec<DVector<f64>>>,
    #[serde(skip)]
    pub z: Option<Vec<DVector<f64>>>,
    #[serde(skip)]
    pub v: Option<Vec<DVector<f64>>>,
    pub terminal_cost: f64,
    pub running_cost: f64,
    /// `½‖μ(t1) − μd‖²` when means are steered.
    pub mean_terminal_cost: Option<f64>,
    pub transversality_residual: f64,
}

impl SteeringSolution {
    pub fn total_cost(&self) -> f64 {
        self.terminal_cost + self.running_cost + self.mean_terminal_cost.unwrap_or(0.0)
    }

    pub fn terminal_sigma(&self) -> &SymmetricMatrix {
        self.sigma.last().expect("non-empty grid")
    }
}

fn check_finite(m: &DMatrix<f64>, t: f64) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteState { t })
    }
}

fn symmetric_step(m: DMatrix<f64>, t: f64) -> Result<SymmetricMatrix> {
    check_finite(&m, t)?;
    let asym = asymmetry(&m);
    if asym > SYM_TOL * m.amax().max(1.0) {
        return Err(Error::Asymmetry { asymmetry: asym, tol: SYM_TOL });
    }
    Ok(SymmetricMatrix::symmetrized(&m))
}

/// System matrices at the start, midpoint and end of grid interval `k`.
struct Interval {
    t: [f64; 3],
    mats: [SystemMatrices; 3],
    bbt: [DMatrix<f64>; 3],
}

fn interval(sys: &LtvSystem, grid: &[f64], k: usize) -> Result<Interval> {
    let (t0, t1) = (grid[k], grid[k + 1]);
    let t = [t0, 0.5 * (t0 + t1), t1];
    let mats = [sys.eval(t[0])?, sys.eval(t[1])?, sys.eval(t[2])?];
    let bbt = [0, 1, 2].map(|i| &mats[i].b * mats[i].b.transpose());
    Ok(Interval { t, mats, bbt })
}

fn riccati_rhs(m: &SystemMatrices, bbt: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
    -(m.a.transpose() * p + p * &m.a - p * bbt * p + &m.q)
}

/// RK4 integration of `−Ṗ = AᵀP + PA − PBBᵀP + Q` forward from `P(t0) = p0`.
pub fn integrate_costate(sys: &LtvSystem, p0: &SymmetricMatrix, grid: &[f64]) -> Result<Vec<SymmetricMatrix>> {
    let mut out = Vec::with_capacity(grid.len());
    out.push(p0.clone());
    for k in 0..grid.len().saturating_sub(1) {
        let iv = interval(sys, grid, k)?;
        let h = iv.t[2] - iv.t[0];
        let p = out[k].as_mat();
        let k1 = riccati_rhs(&iv.mats[0], &iv.bbt[0], p);
        let k2 = riccati_rhs(&iv.mats[1], &iv.bbt[1], &(p + &k1 * (0.5 * h)));
        let k3 = riccati_rhs(&iv.mats[1], &iv.bbt[1], &(p + &k2 * (0.5 * h)));
        let k4 = riccati_rhs(&iv.mats[2], &iv.bbt[2], &(p + &k3 * h));
        let next = p + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        out.push(symmetric_step(next, iv.t[2])?);
    }
    Ok(out)
}

fn lyapunov_rhs(acl: &DMatrix<f64>, bbt: &DMatrix<f64>, s: &DMatrix<f64>) -> DMatrix<f64> {
    acl * s + s * acl.transpose() + bbt
}

/// RK4 for `Σ̇ = AclΣ + ΣAclᵀ + BBᵀ` where `acl(k, j, mats)` gives the
/// closed-loop matrix at point `j` (0 start, 1 midpoint, 2 end) of interval `k`.
fn integrate_lyapunov(
    sys: &LtvSystem,
    sigma0: &SymmetricMatrix,
    grid: &[f64],
    acl: impl Fn(usize, usize, &SystemMatrices) -> DMatrix<f64>,
) -> Result<Vec<SymmetricMatrix>> {
    SpdMatrix::try_new(sigma0.clone())?;
    let mut out = Vec::with_capacity(grid.len());
    out.push(sigma0.clone());
    for k in 0..grid.len().saturating_sub(1) {
        let iv = interval(sys, grid, k)?;
        let h = iv.t[2] - iv.t[0];
        let a = [0, 1, 2].map(|j| acl(k, j, &iv.mats[j]));
        let s = out[k].as_mat();
        let k1 = lyapunov_rhs(&a[0], &iv.bbt[0], s);
        let k2 = lyapunov_rhs(&a[1], &iv.bbt[1], &(s + &k1 * (0.5 * h)));
        let k3 = lyapunov_rhs(&a[1], &iv.bbt[1], &(s + &k2 * (0.5 * h)));
        let k4 = lyapunov_rhs(&a[2], &iv.bbt[2], &(s + &k3 * h));
        let next = symmetric_step(s + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0), iv.t[2])?;
        let spd = SpdMatrix::try_new(next)?;
        out.push(spd.into_sym());
    }
    Ok(out)
}

fn check_len(found: usize, expected: usize) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Covariance under `u = −BᵀP x`, with `P` interpolated linearly at midpoints.
pub fn integrate_covariance(
    sys: &LtvSystem,
    sigma0: &SymmetricMatrix,
    p: &[SymmetricMatrix],
    grid: &[f64],
) -> Result<Vec<SymmetricMatrix>> {
    check_len(p.len(), grid.len())?;
    integrate_lyapunov(sys, sigma0, grid, |k, j, m| {
        let pj = match j {
            0 => p[k].as_mat().clone(),
            1 => (p[k].as_mat() + p[k + 1].as_mat()) * 0.5,
            _ => p[k + 1].as_mat().clone(),
        };
        &m.a - &m.b * (m.b.transpose() * pj)
    })
}

/// Like [`integrate_covariance`] but with `p_fine` sampled on the grid
/// refined by two, so midpoint values are exact.
pub fn integrate_covariance_fine(
    sys: &LtvSystem,
    sigma0: &SymmetricMatrix,
    p_fine: &[SymmetricMatrix],
    grid: &[f64],
) -> Result<Vec<SymmetricMatrix>> {
    check_len(p_fine.len(), 2 * grid.len() - 1)?;
    integrate_lyapunov(sys, sigma0, grid, |k, j, m| {
        &m.a - &m.b * (m.b.transpose() * p_fine[2 * k + j].as_mat())
    })
}

/// Covariance under arbitrary gridded gains `u = K x`, with `K` interpolated
/// linearly at midpoints.
pub fn integrate_covariance_with_gains(
    sys: &LtvSystem,
    sigma0: &SymmetricMatrix,
    gains: &[DMatrix<f64>],
    grid: &[f64],
) -> Result<Vec<SymmetricMatrix>> {
    check_len(gains.len(), grid.len())?;
    integrate_lyapunov(sys, sigma0, grid, |k, j, m| {
        let kj = match j {
            0 => gains[k].clone(),
            1 => (&gains[k] + &gains[k + 1]) * 0.5,
            _ => gains[k + 1].clone(),
        };
        &m.a + &m.b * kj
    })
}

/// `K[k] = −B(t_k)ᵀ P[k]`.
pub fn extract_gains(sys: &LtvSystem, p: &[SymmetricMatrix], grid: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    check_len(p.len(), grid.len())?;
    grid.iter()
        .zip(p)
        .map(|(&t, pk)| Ok(-(sys.eval(t)?.b.transpose() * pk.as_mat())))
        .collect()
}

/// Mean and mean-costate trajectories with the feedforward term.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanSteering {
    pub mu: Vec<DVector<f64>>,
    pub z: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
    /// `‖z(t1) − (μ(t1) − μd)‖₂`
    pub terminal_residual: f64,
}

/// Shoots the mean two-point boundary value problem through the transition
/// blocks, then integrates `(μ, z)` forward with RK4 on `grid`.
pub fn solve_mean_steering(
    sys: &LtvSystem,
    blocks: &StmBlocks,
    mu0: &DVector<f64>,
    mud: &DVector<f64>,
    p: &[SymmetricMatrix],
    grid: &[f64],
) -> Result<MeanSteering> {
    let n = blocks.n;
    check_len(mu0.len(), n)?;
    check_len(mud.len(), n)?;
    check_len(p.len(), grid.len())?;
    let den = &blocks.phi22 - &blocks.phi12;
    let rc = rcond(&den);
    if !(rc > 1e-12) {
        return Err(Error::MeanBvpSingular { rcond: rc });
    }
    let rhs = (&blocks.phi11 - &blocks.phi21) * mu0 - mud;
    let z0 = den.lu().solve(&rhs).ok_or(Error::MeanBvpSingular { rcond: rc })?;

    let mut state = DVector::zeros(2 * n);
    state.rows_mut(0, n).copy_from(mu0);
    state.rows_mut(n, n).copy_from(&z0);
    let mut states = Vec::with_capacity(grid.len());
    states.push(state.clone());
    for k in 0..grid.len().saturating_sub(1) {
        let iv = interval(sys, grid, k)?;
        let h = iv.t[2] - iv.t[0];
        let m = [0, 1, 2].map(|j| assemble_hamiltonian(&iv.mats[j].a, &iv.mats[j].b, &iv.mats[j].q));
        let k1 = &m[0] * &state;
        let k2 = &m[1] * (&state + &k1 * (0.5 * h));
        let k3 = &m[1] * (&state + &k2 * (0.5 * h));
        let k4 = &m[2] * (&state + &k3 * h);
        state += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        if state.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteState { t: iv.t[2] });
        }
        states.push(state.clone());
    }

    let mu: Vec<DVector<f64>> = states.iter().map(|s| s.rows(0, n).into_owned()).collect();
    let z: Vec<DVector<f64>> = states.iter().map(|s| s.rows(n, n).into_owned()).collect();
    let v = grid
        .iter()
        .enumerate()
        .map(|(k, &t)| Ok(sys.eval(t)?.b.transpose() * (p[k].as_mat() * &mu[k] - &z[k])))
        .collect::<Result<Vec<_>>>()?;
    let last = grid.len() - 1;
    let terminal_residual = (&z[last] - (&mu[last] - mud)).norm();
    Ok(MeanSteering {
        mu,
        z,
        v,
        terminal_residual,
    })
}

/// Composite trapezoid rule on a possibly non-uniform grid.
fn trapezoid(grid: &[f64], f: &[f64]) -> f64 {
    grid.windows(2)
        .zip(f.windows(2))
        .map(|(t, y)| 0.5 * (t[1] - t[0]) * (y[0] + y[1]))
        .sum()
}

/// Mean and feedforward trajectories on the grid.
pub type MeanPaths<'a> = (&'a [DVector<f64>], &'a [DVector<f64>]);

/// `(terminal, running)` costs: `½‖Σ(t1) − Σd‖_F²` and the trapezoid
/// integral of `trace(Σ(KᵀK + Q))`, plus `μᵀ(KᵀK + Q)μ + ‖v‖² + 2vᵀKμ` when
/// mean trajectories are given.
pub fn evaluate_objective(
    sys: &LtvSystem,
    grid: &[f64],
    sigma: &[SymmetricMatrix],
    gains: &[DMatrix<f64>],
    sigmad: &SymmetricMatrix,
    means: Option<MeanPaths<'_>>,
) -> Result<(f64, f64)> {
    check_len(sigma.len(), grid.len())?;
    check_len(gains.len(), grid.len())?;
    let terminal = 0.5 * sigma[sigma.len() - 1].sub(sigmad).frobenius().powi(2);
    let integrand = grid
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let q = sys.eval(t)?.q;
            let kk = &gains[k];
            let w = kk.transpose() * kk + q;
            let mut value = (sigma[k].as_mat() * &w).trace();
            if let Some((mu, v)) = means {
                let (mu, v) = (&mu[k], &v[k]);
                value += mu.dot(&(&w * mu)) + v.norm_squared() + 2.0 * v.dot(&(kk * mu));
            }
            Ok(value)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((terminal, trapezoid(grid, &integrand)))
}

/// Total covariance objective of gridded gains, with the covariance
/// re-integrated under those gains.
pub fn objective_for_gains(problem: &SteeringProblem, gains: &[DMatrix<f64>], grid: &[f64]) -> Result<f64> {
    let sigma = integrate_covariance_with_gains(&problem.system, &problem.sigma0, gains, grid)?;
    let (terminal, running) = evaluate_objective(&problem.system, grid, &sigma, gains, &problem.sigmad, None)?;
    Ok(terminal + running)
}

/// `‖P(t1) − (Σ(t1) − Σd)‖_F`.
pub fn transversality_residual(p1: &SymmetricMatrix, sigma1: &SymmetricMatrix, sigmad: &SymmetricMatrix) -> f64 {
    frobenius_norm(&(p1.as_mat() - (sigma1.as_mat() - sigmad.as_mat())))
}

/// Costate, covariance, gains, optional means and costs from a converged `P0`.
pub fn synthesize(
    problem: &SteeringProblem,
    p0: &SymmetricMatrix,
    blocks: &StmBlocks,
    cfg: &SolverConfig,
) -> Result<SteeringSolution> {
    let sys = &problem.system;
    let grid = time_grid(problem.t0, problem.t1, cfg.grid_steps);
    let (p, sigma) = if cfg.fine_costate_grid {
        let fine = time_grid(problem.t0, problem.t1, 2 * cfg.grid_steps);
        let p_fine = integrate_costate(sys, p0, &fine)?;
        let sigma = integrate_covariance_fine(sys, &problem.sigma0, &p_fine, &grid)?;
        let p = p_fine.into_iter().step_by(2).collect();
        (p, sigma)
    } else {
        let p = integrate_costate(sys, p0, &grid)?;
        let sigma = integrate_covariance(sys, &problem.sigma0, &p, &grid)?;
        (p, sigma)
    };
    let k = extract_gains(sys, &p, &grid)?;
    let means = match problem.means() {
        Some((mu0, mud)) => Some(solve_mean_steering(sys, blocks, mu0, mud, &p, &grid)?),
        None => None,
    };
    let (terminal_cost, running_cost) = evaluate_objective(
        sys,
        &grid,
        &sigma,
        &k,
        &problem.sigmad,
        means.as_ref().map(|m| (m.mu.as_slice(), m.v.as_slice())),
    )?;
    let last = grid.len() - 1;
    let transversality = transversality_residual(&p[last], &sigma[last], &problem.sigmad);
    let mean_terminal_cost = match (&means, &problem.mud) {
        (Some(m), Some(mud)) => Some(0.5 * (&m.mu[last] - mud).norm_squared()),
        _ => None,
    };
    let (mu, z, v) = match means {
        Some(m) => (Some(m.mu), Some(m.z), Some(m.v)),
        None => (None, None, None),
    };
    Ok(SteeringSolution {
        grid,
        p,
        sigma,
        k,
        mu,
        z,
        v,
        terminal_cost,
        running_cost,
        mean_terminal_cost,
        transversality_residual: transversality,
    })
}
