//! Hamiltonian matrix and its state transition matrix over the horizon.
//!
//! The transition matrix is integrated with fixed-step classical RK4. Its
//! four blocks satisfy six algebraic identities (symplectic structure); the
//! residuals of those identities are recorded with the blocks and act as an
//! accuracy certificate. Constant systems are additionally cross-checked
//! against `exp(M (t1 - t0))`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::expm::expm;
use crate::matcore::{frobenius_norm, rcond};
use crate::model::LtvSystem;

pub const DEFAULT_STM_TOL: f64 = 1e-8;
pub const EXPM_AGREEMENT_TOL: f64 = 1e-7;

/// `[[A, -B Bᵀ], [-Q, -Aᵀ]]` at time `t`.
pub fn hamiltonian_matrix(sys: &LtvSystem, t: f64) -> Result<DMatrix<f64>> {
    let mats = sys.eval(t)?;
    Ok(assemble_hamiltonian(&mats.a, &mats.b, &mats.q))
}

pub(crate) fn assemble_hamiltonian(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(a);
    m.view_mut((0, n), (n, n)).copy_from(&(-(b * b.transpose())));
    m.view_mut((n, 0), (n, n)).copy_from(&(-q));
    m.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    m
}

/// Blocks of `Φ(t0, t1)` with the six identity residuals.
#[derive(Clone, Debug, PartialEq)]
pub struct StmBlocks {
    pub n: usize,
    pub phi11: DMatrix<f64>,
    pub phi12: DMatrix<f64>,
    pub phi21: DMatrix<f64>,
    pub phi22: DMatrix<f64>,
    pub residuals: [f64; 6],
    /// `‖Φ_rk4 − exp(M Δt)‖_F` for constant systems.
    pub expm_difference: Option<f64>,
}

impl StmBlocks {
    pub fn from_parts(
        phi11: DMatrix<f64>,
        phi12: DMatrix<f64>,
        phi21: DMatrix<f64>,
        phi22: DMatrix<f64>,
    ) -> Self {
        let n = phi11.nrows();
        let mut blocks = StmBlocks {
            n,
            phi11,
            phi12,
            phi21,
            phi22,
            residuals: [0.0; 6],
            expm_difference: None,
        };
        blocks.residuals = check_identities(&blocks);
        blocks
    }

    pub fn from_full(full: &DMatrix<f64>) -> Self {
        let n = full.nrows() / 2;
        let block = |r, c| full.view((r, c), (n, n)).into_owned();
        Self::from_parts(block(0, 0), block(0, n), block(n, 0), block(n, n))
    }

    pub fn identity(n: usize) -> Self {
        let i = DMatrix::identity(n, n);
        let z = DMatrix::zeros(n, n);
        Self::from_parts(i.clone(), z.clone(), z, i)
    }

    pub fn full(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&self.phi11);
        m.view_mut((0, n), (n, n)).copy_from(&self.phi12);
        m.view_mut((n, 0), (n, n)).copy_from(&self.phi21);
        m.view_mut((n, n), (n, n)).copy_from(&self.phi22);
        m
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    /// Reciprocal condition numbers of `Φ11` and `Φ12`.
    pub fn block_rconds(&self) -> (f64, f64) {
        (rcond(&self.phi11), rcond(&self.phi12))
    }

    /// Reciprocal condition numbers of the wide matrices `[Φ11ᵀ, −Φ12ᵀ]`
    /// and `[Φ22, −Φ12]`.
    pub fn wide_block_rconds(&self) -> (f64, f64) {
        let n = self.n;
        let mut first = DMatrix::zeros(n, 2 * n);
        first.view_mut((0, 0), (n, n)).copy_from(&self.phi11.transpose());
        first.view_mut((0, n), (n, n)).copy_from(&(-self.phi12.transpose()));
        let mut second = DMatrix::zeros(n, 2 * n);
        second.view_mut((0, 0), (n, n)).copy_from(&self.phi22);
        second.view_mut((0, n), (n, n)).copy_from(&(-&self.phi12));
        (rcond(&first), rcond(&second))
    }
}

/// Frobenius residuals of the six block identities, in order:
/// `Φ11ᵀΦ22 − Φ21ᵀΦ12 = I`, `Φ12ᵀΦ22` symmetric, `Φ21ᵀΦ11` symmetric,
/// `Φ11Φ22ᵀ − Φ12Φ21ᵀ = I`, `Φ12Φ11ᵀ` symmetric, `Φ21Φ22ᵀ` symmetric.
pub fn check_identities(b: &StmBlocks) -> [f64; 6] {
    let i = DMatrix::<f64>::identity(b.n, b.n);
    let (p11, p12, p21, p22) = (&b.phi11, &b.phi12, &b.phi21, &b.phi22);
    [
        frobenius_norm(&(p11.transpose() * p22 - p21.transpose() * p12 - &i)),
        frobenius_norm(&(p12.transpose() * p22 - p22.transpose() * p12)),
        frobenius_norm(&(p21.transpose() * p11 - p11.transpose() * p21)),
        frobenius_norm(&(p11 * p22.transpose() - p12 * p21.transpose() - &i)),
        frobenius_norm(&(p12 * p11.transpose() - p11 * p12.transpose())),
        frobenius_norm(&(p21 * p22.transpose() - p22 * p21.transpose())),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StmOptions {
    pub grid_steps: usize,
    pub stm_tol: f64,
    pub rcond_floor: f64,
}

impl Default for StmOptions {
    fn default() -> Self {
        StmOptions {
            grid_steps: 2000,
            stm_tol: DEFAULT_STM_TOL,
            rcond_floor: 1e-12,
        }
    }
}

/// RK4 integration of `∂ₜΦ = M(t) Φ`, `Φ(t0) = I`, returning the full
/// `2n × 2n` matrix `Φ(t0, t1)`.
pub fn propagate(sys: &LtvSystem, t0: f64, t1: f64, steps: usize) -> Result<DMatrix<f64>> {
    if steps == 0 {
        return Err(Error::Format("grid_steps must be positive".into()));
    }
    let dim = 2 * sys.n();
    let h = (t1 - t0) / steps as f64;
    let mut phi = DMatrix::<f64>::identity(dim, dim);

    if sys.is_lti() {
        let m = hamiltonian_matrix(sys, t0)?;
        for _ in 0..steps {
            let k1 = &m * &phi;
            let k2 = &m * (&phi + &k1 * (0.5 * h));
            let k3 = &m * (&phi + &k2 * (0.5 * h));
            let k4 = &m * (&phi + &k3 * h);
            phi += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        }
        return Ok(phi);
    }

    let mut m_start = hamiltonian_matrix(sys, t0)?;
    for k in 0..steps {
        let t = t0 + (t1 - t0) * (k as f64) / steps as f64;
        let t_next = t0 + (t1 - t0) * ((k + 1) as f64) / steps as f64;
        let m_mid = hamiltonian_matrix(sys, t + 0.5 * h)?;
        let m_end = hamiltonian_matrix(sys, t_next)?;
        let k1 = &m_start * &phi;
        let k2 = &m_mid * (&phi + &k1 * (0.5 * h));
        let k3 = &m_mid * (&phi + &k2 * (0.5 * h));
        let k4 = &m_end * (&phi + &k3 * h);
        phi += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        m_start = m_end;
    }
    Ok(phi)
}

/// Blocks of `Φ(t0, t1)` with default tolerances.
pub fn compute_stm(sys: &LtvSystem, t0: f64, t1: f64, grid_steps: usize) -> Result<StmBlocks> {
    compute_stm_with(
        sys,
        t0,
        t1,
        &StmOptions {
            grid_steps,
            ..StmOptions::default()
        },
    )
}

/// Integrates the transition matrix and certifies it: identity residuals
/// within `stm_tol`, invertible `Φ11` and `Φ12`, and (constant systems)
/// agreement with the matrix exponential.
pub fn compute_stm_with(sys: &LtvSystem, t0: f64, t1: f64, opts: &StmOptions) -> Result<StmBlocks> {
    if !(t1 > t0) {
        return Err(Error::OutOfHorizon { t: t1, t0, t1 });
    }
    let full = propagate(sys, t0, t1, opts.grid_steps)?;
    if full.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            what: "state transition matrix",
        });
    }
    let mut blocks = StmBlocks::from_full(&full);

    if blocks.residuals.iter().any(|&r| !(r <= opts.stm_tol)) {
        return Err(Error::StmIdentityViolation {
            residuals: blocks.residuals,
            tol: opts.stm_tol,
        });
    }

    if sys.is_lti() {
        let m = hamiltonian_matrix(sys, t0)?;
        let reference = expm(&(m * (t1 - t0)));
        let difference = frobenius_norm(&(&full - reference));
        blocks.expm_difference = Some(difference);
        if !(difference <= EXPM_AGREEMENT_TOL) {
            return Err(Error::ExpmMismatch { difference });
        }
    }

    let (r11, r12) = blocks.block_rconds();
    if !(r11 > opts.rcond_floor) {
        return Err(Error::SingularBlock {
            block: "phi11",
            rcond: r11,
        });
    }
    if !(r12 > opts.rcond_floor) {
        return Err(Error::SingularBlock {
            block: "phi12",
            rcond: r12,
        });
    }
    Ok(blocks)
}
