//! The four maps whose composition drives the fixed-point recursion.
//!
//! * `f1`: `P0 ↦ H0 = Σ0⁻¹ − P0`
//! * `f2`: `H0 ↦ H1`, the Riccati flow of `H` over the horizon written as an LFT
//! * `f3`: `H1 ↦ P1`, the stabilizing solution of the terminal-condition CARE
//! * `f4`: `P1 ↦ P0`, the backward Riccati flow of `P` written as an LFT
//!
//! The two LFTs map symmetric matrices to symmetric matrices in exact
//! arithmetic; numerically the raw result is checked against
//! [`LFT_SYM_TOL`] before it is symmetrized.

use nalgebra::DMatrix;

use crate::error::{Error, Result, Stage};
use crate::matcore::{asymmetry, eigh, from_spectrum, frobenius_norm, rcond, SpdMatrix, SymmetricMatrix};
use crate::model::{SolverConfig, SteeringProblem};
use crate::stm::{compute_stm_with, StmBlocks, StmOptions};

/// Largest raw asymmetry accepted from an LFT before it is treated as singular.
pub const LFT_SYM_TOL: f64 = 1e-9;

/// Everything the maps need: transition blocks and boundary covariances.
#[derive(Clone, Debug)]
pub struct MapContext {
    pub blocks: StmBlocks,
    pub sigma0inv: SymmetricMatrix,
    pub sigmad: SpdMatrix,
    pub rcond_floor: f64,
}

impl MapContext {
    pub fn new(blocks: StmBlocks, sigma0: &SymmetricMatrix, sigmad: &SymmetricMatrix, rcond_floor: f64) -> Result<Self> {
        let n = blocks.n;
        for s in [sigma0, sigmad] {
            if s.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: s.dim(),
                });
            }
        }
        let sigma0 = SpdMatrix::try_new(sigma0.clone())?;
        Ok(MapContext {
            blocks,
            sigma0inv: sigma0.inverse().into_sym(),
            sigmad: SpdMatrix::try_new(sigmad.clone())?,
            rcond_floor,
        })
    }

    /// Computes the transition blocks of `problem` and builds the context.
    pub fn for_problem(problem: &SteeringProblem, cfg: &SolverConfig) -> Result<Self> {
        let opts = StmOptions {
            grid_steps: cfg.grid_steps,
            stm_tol: cfg.stm_tol,
            rcond_floor: cfg.rcond_floor,
        };
        let blocks = compute_stm_with(&problem.system, problem.t0, problem.t1, &opts)?;
        Self::new(blocks, &problem.sigma0, &problem.sigmad, cfg.rcond_floor)
    }

    pub fn n(&self) -> usize {
        self.blocks.n
    }
}

/// An LFT value before symmetrization.
#[derive(Clone, Debug)]
pub struct RawLft {
    pub value: DMatrix<f64>,
    /// Reciprocal condition number of the inverted factor.
    pub rcond: f64,
}

impl RawLft {
    pub fn asymmetry(&self) -> f64 {
        asymmetry(&self.value)
    }
}

fn solve_lft(den: DMatrix<f64>, num: DMatrix<f64>, floor: f64, stage: Stage) -> Result<RawLft> {
    let rc = rcond(&den);
    if !(rc > floor) {
        return Err(Error::LftSingular { stage, rcond: rc });
    }
    let value = den.lu().solve(&num).ok_or(Error::LftSingular { stage, rcond: rc })?;
    if value.iter().any(|x| !x.is_finite()) {
        return Err(Error::LftSingular { stage, rcond: rc });
    }
    Ok(RawLft { value, rcond: rc })
}

fn guard(raw: RawLft, stage: Stage) -> Result<SymmetricMatrix> {
    if !(raw.asymmetry() <= LFT_SYM_TOL) {
        return Err(Error::LftSingular { stage, rcond: raw.rcond });
    }
    Ok(SymmetricMatrix::symmetrized(&raw.value))
}

/// `Σ0⁻¹ − X`.
pub fn f1(ctx: &MapContext, x: &SymmetricMatrix) -> SymmetricMatrix {
    ctx.sigma0inv.sub(x)
}

/// `−(Φ11ᵀ − XΦ12ᵀ)⁻¹(Φ21ᵀ − XΦ22ᵀ)` without symmetrization.
pub fn f2_raw(ctx: &MapContext, x: &SymmetricMatrix) -> Result<RawLft> {
    let b = &ctx.blocks;
    let x = x.as_mat();
    let den = b.phi11.transpose() - x * b.phi12.transpose();
    let num = -(b.phi21.transpose() - x * b.phi22.transpose());
    solve_lft(den, num, ctx.rcond_floor, Stage::F2)
}

pub fn f2(ctx: &MapContext, x: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    guard(f2_raw(ctx, x)?, Stage::F2)
}

/// Stabilizing solution `−(H1+Σd)/2 + (((H1−Σd)/2)² + I)^½` of the
/// terminal CARE.
///
/// With `(H1 − Σd)/2 = V diag(λ) Vᵀ` this equals `V diag(ψ(λ)) Vᵀ − Σd`
/// where `ψ(λ) = √(λ²+1) − λ > 0`, which is how it is evaluated.
pub fn care_map(h1: &SymmetricMatrix, sigmad: &SymmetricMatrix) -> SymmetricMatrix {
    let half_diff = h1.sub(sigmad).scale(0.5);
    let (values, vectors) = eigh(&half_diff);
    from_spectrum(&values.map(psi), &vectors).sub(sigmad)
}

/// `√(λ²+1) − λ`, evaluated without cancellation for large positive λ.
pub(crate) fn psi(lambda: f64) -> f64 {
    let r = lambda.hypot(1.0);
    if lambda > 0.0 {
        1.0 / (r + lambda)
    } else {
        r - lambda
    }
}

pub fn f3(ctx: &MapContext, x: &SymmetricMatrix) -> SymmetricMatrix {
    care_map(x, ctx.sigmad.as_sym())
}

/// `(XΦ12 − Φ22)⁻¹(Φ21 − XΦ11)` without symmetrization.
pub fn f4_raw(ctx: &MapContext, x: &SymmetricMatrix) -> Result<RawLft> {
    let b = &ctx.blocks;
    let x = x.as_mat();
    let den = x * &b.phi12 - &b.phi22;
    let num = &b.phi21 - x * &b.phi11;
    solve_lft(den, num, ctx.rcond_floor, Stage::F4)
}

pub fn f4(ctx: &MapContext, x: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    guard(f4_raw(ctx, x)?, Stage::F4)
}

/// Intermediate values of one pass through the four maps.
#[derive(Clone, Debug, PartialEq)]
pub struct Chain {
    pub h0: SymmetricMatrix,
    pub h1: SymmetricMatrix,
    pub p1: SymmetricMatrix,
    pub p0: SymmetricMatrix,
}

pub fn composite_chain(ctx: &MapContext, x: &SymmetricMatrix) -> Result<Chain> {
    let h0 = f1(ctx, x);
    let h1 = f2(ctx, &h0)?;
    let p1 = f3(ctx, &h1);
    let p0 = f4(ctx, &p1)?;
    Ok(Chain { h0, h1, p1, p0 })
}

/// `f4 ∘ f3 ∘ f2 ∘ f1`.
pub fn composite_f(ctx: &MapContext, x: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    composite_chain(ctx, x).map(|c| c.p0)
}

/// Frobenius residuals of the terminal conditions linking `H1` and `P1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Residuals {
    /// `(P1 + Σd)(P1 + H1) − I`
    pub product: f64,
    /// `P1² + P1Ā + ĀP1 + (ΣdH1 + H1Σd)/2 − I` with `Ā = (H1 + Σd)/2`
    pub care: f64,
    /// `(H1 − Σd)P1 + P1(Σd − H1) − (ΣdH1 − H1Σd)`
    pub sylvester: f64,
    /// `P1 + Σd` is positive definite, so it is a valid terminal covariance.
    pub transversality_ready: bool,
}

pub fn residuals(ctx: &MapContext, h1: &SymmetricMatrix, p1: &SymmetricMatrix) -> Residuals {
    terminal_residuals(ctx.sigmad.as_sym(), h1, p1)
}

/// [`residuals`] without a map context.
pub fn terminal_residuals(sigmad: &SymmetricMatrix, h1: &SymmetricMatrix, p1: &SymmetricMatrix) -> Residuals {
    let n = p1.dim();
    let i = DMatrix::<f64>::identity(n, n);
    let (p, h, s) = (p1.as_mat(), h1.as_mat(), sigmad.as_mat());
    let product = (p + s) * (p + h) - &i;
    let abar = (h + s) * 0.5;
    let care = p * p + p * &abar + &abar * p + (s * h + h * s) * 0.5 - &i;
    let sylvester = (h - s) * p + p * (s - h) - (s * h - h * s);
    Residuals {
        product: frobenius_norm(&product),
        care: frobenius_norm(&care),
        sylvester: frobenius_norm(&sylvester),
        transversality_ready: SpdMatrix::try_new(p1.add(sigmad)).is_ok(),
    }
}
