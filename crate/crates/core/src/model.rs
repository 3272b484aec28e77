//! Problem data: the linear system, boundary covariances, solver settings,
//! validation, and the two built-in example problems.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{eigh, SymmetricMatrix};

/// One time sample of the system matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemSample {
    pub t: f64,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: SymmetricMatrix,
}

/// `(A, B, Q)` at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemMatrices {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

/// A linear system `dx = A x dt + B u dt + B dw` with state weight `Q`.
///
/// A single sample means constant (time-invariant) matrices. Otherwise the
/// matrices are interpolated linearly in time between samples.
#[derive(Clone, Debug, PartialEq)]
pub struct LtvSystem {
    n: usize,
    m: usize,
    samples: Vec<SystemSample>,
}

impl LtvSystem {
    /// Constant matrices. The sample time is irrelevant and stored as 0.
    pub fn lti(a: DMatrix<f64>, b: DMatrix<f64>, q: SymmetricMatrix) -> Result<Self> {
        Self::from_samples(vec![SystemSample { t: 0.0, a, b, q }])
    }

    /// Piecewise-linear system from samples (times must be strictly increasing).
    pub fn from_samples(samples: Vec<SystemSample>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or(Error::Format("system needs at least one sample".into()))?;
        let n = first.a.nrows();
        let m = first.b.ncols();
        for s in &samples {
            check_shape(&s.a, n, n)?;
            check_shape(&s.b, n, m)?;
            if s.q.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: s.q.dim(),
                });
            }
        }
        Ok(LtvSystem { n, m, samples })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn is_lti(&self) -> bool {
        self.samples.len() == 1
    }

    pub fn samples(&self) -> &[SystemSample] {
        &self.samples
    }

    /// Time span covered by the samples; `None` for constant systems.
    pub fn span(&self) -> Option<(f64, f64)> {
        if self.is_lti() {
            None
        } else {
            Some((self.samples[0].t, self.samples[self.samples.len() - 1].t))
        }
    }

    /// Matrices at time `t`.
    pub fn eval(&self, t: f64) -> Result<SystemMatrices> {
        if !t.is_finite() {
            return Err(Error::NonFinite { what: "time" });
        }
        if self.is_lti() {
            let s = &self.samples[0];
            return Ok(SystemMatrices {
                a: s.a.clone(),
                b: s.b.clone(),
                q: s.q.as_mat().clone(),
            });
        }
        let (lo, hi) = self.span().unwrap_or((t, t));
        let slack = time_slack(lo, hi);
        if t < lo - slack || t > hi + slack {
            return Err(Error::OutOfHorizon { t, t0: lo, t1: hi });
        }
        let t = t.clamp(lo, hi);
        let k = self
            .samples
            .partition_point(|s| s.t <= t)
            .clamp(1, self.samples.len() - 1);
        let (s0, s1) = (&self.samples[k - 1], &self.samples[k]);
        let w = (t - s0.t) / (s1.t - s0.t);
        let lerp = |x: &DMatrix<f64>, y: &DMatrix<f64>| x * (1.0 - w) + y * w;
        Ok(SystemMatrices {
            a: lerp(&s0.a, &s1.a),
            b: lerp(&s0.b, &s1.b),
            q: lerp(s0.q.as_mat(), s1.q.as_mat()),
        })
    }
}

fn check_shape(m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows {
        return Err(Error::DimensionMismatch {
            expected: rows,
            found: m.nrows(),
        });
    }
    if m.ncols() != cols {
        return Err(Error::DimensionMismatch {
            expected: cols,
            found: m.ncols(),
        });
    }
    Ok(())
}

pub(crate) fn time_slack(t0: f64, t1: f64) -> f64 {
    1e-12 * (t1 - t0).abs().max(t0.abs()).max(t1.abs()).max(1.0)
}

/// Full input to the solver.
#[derive(Clone, Debug, PartialEq)]
pub struct SteeringProblem {
    pub system: LtvSystem,
    pub t0: f64,
    pub t1: f64,
    pub sigma0: SymmetricMatrix,
    pub sigmad: SymmetricMatrix,
    pub mu0: Option<DVector<f64>>,
    pub mud: Option<DVector<f64>>,
}

impl SteeringProblem {
    /// System matrices at `t`, rejecting times outside `[t0, t1]`.
    pub fn eval_system(&self, t: f64) -> Result<SystemMatrices> {
        let slack = time_slack(self.t0, self.t1);
        if !(t >= self.t0 - slack && t <= self.t1 + slack) {
            return Err(Error::OutOfHorizon {
                t,
                t0: self.t0,
                t1: self.t1,
            });
        }
        self.system.eval(t.clamp(self.t0, self.t1))
    }

    /// Both means, when mean steering is requested.
    pub fn means(&self) -> Option<(&DVector<f64>, &DVector<f64>)> {
        self.mu0.as_ref().zip(self.mud.as_ref())
    }

    /// Checks assumptions on the data; an empty list means the problem is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.system.n();
        let mut push = |code, message: String| out.push(Violation { code, message });

        if !(self.t0.is_finite() && self.t1.is_finite() && self.t1 > self.t0) {
            push(
                ViolationCode::HorizonInvalid,
                format!("need finite t1 > t0, got [{}, {}]", self.t0, self.t1),
            );
        }

        let samples = self.system.samples();
        for (k, s) in samples.iter().enumerate() {
            let finite = s.a.iter().chain(s.b.iter()).chain(s.q.as_mat().iter()).all(|x| x.is_finite())
                && s.t.is_finite();
            if !finite {
                push(ViolationCode::NonFinite, format!("sample {k} has non-finite entries"));
                continue;
            }
            let (w, _) = eigh(&s.q);
            let scale = w.amax().max(1.0);
            if w.min() < -1e-10 * scale {
                push(
                    ViolationCode::QNotPsd,
                    format!("Q at sample {k} has eigenvalue {:.3e}", w.min()),
                );
            }
        }
        if samples.windows(2).any(|p| !(p[1].t > p[0].t)) {
            push(
                ViolationCode::SampleTimesNotIncreasing,
                "sample times must be strictly increasing".into(),
            );
        }
        if let Some((lo, hi)) = self.system.span() {
            let slack = time_slack(self.t0, self.t1);
            if lo > self.t0 + slack || hi < self.t1 - slack {
                push(
                    ViolationCode::HorizonNotCovered,
                    format!("samples span [{lo}, {hi}] but horizon is [{}, {}]", self.t0, self.t1),
                );
            }
        }

        for (name, code, sig) in [
            ("sigma0", ViolationCode::Sigma0NotPd, &self.sigma0),
            ("sigmad", ViolationCode::SigmadNotPd, &self.sigmad),
        ] {
            if sig.dim() != n {
                push(
                    ViolationCode::DimensionMismatch,
                    format!("{name} is {}x{0}, state dimension is {n}", sig.dim()),
                );
            } else if !sig.as_mat().iter().all(|x| x.is_finite()) {
                push(ViolationCode::NonFinite, format!("{name} has non-finite entries"));
            } else if !crate::matcore::is_positive_definite(sig) {
                push(code, format!("{name} is not positive definite"));
            }
        }

        match (&self.mu0, &self.mud) {
            (Some(a), Some(b)) => {
                if a.len() != n || b.len() != n {
                    push(
                        ViolationCode::DimensionMismatch,
                        format!("means must have length {n}"),
                    );
                } else if !a.iter().chain(b.iter()).all(|x| x.is_finite()) {
                    push(ViolationCode::NonFinite, "means have non-finite entries".into());
                }
            }
            (None, None) => {}
            _ => push(
                ViolationCode::MeanPartial,
                "mu0 and mud must be given together".into(),
            ),
        }

        if self.system.is_lti() && samples[0].a.iter().all(|x| x.is_finite()) && samples[0].b.iter().all(|x| x.is_finite()) {
            let s = &samples[0];
            let (rank, _) = controllability_rank(&s.a, &s.b);
            if rank < n {
                push(
                    ViolationCode::NotControllable,
                    format!("controllability matrix has rank {rank} < {n}"),
                );
            }
        }
        out
    }

    /// Non-fatal findings (currently: controllability not certified for
    /// time-varying systems).
    pub fn validation_warnings(&self) -> Vec<Violation> {
        if self.system.is_lti() {
            Vec::new()
        } else {
            vec![Violation {
                code: ViolationCode::ControllabilityUnchecked,
                message: "uniform controllability is not checked for time-varying systems".into(),
            }]
        }
    }
}

/// Numerical rank of `[B, AB, …, Aⁿ⁻¹B]` and its singular values.
pub fn controllability_rank(a: &DMatrix<f64>, b: &DMatrix<f64>) -> (usize, Vec<f64>) {
    let n = a.nrows();
    let m = b.ncols();
    let mut ctrb = DMatrix::zeros(n, n * m);
    let mut block = b.clone();
    for k in 0..n {
        ctrb.columns_mut(k * m, m).copy_from(&block);
        block = a * block;
    }
    let sv: Vec<f64> = ctrb.singular_values().iter().copied().collect();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let rank = sv.iter().filter(|&&s| s > 1e-10 * max && s > 0.0).count();
    (rank, sv)
}

/// Machine-readable reason a problem was rejected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationCode {
    HorizonInvalid,
    DimensionMismatch,
    NonFinite,
    SampleTimesNotIncreasing,
    HorizonNotCovered,
    QNotPsd,
    Sigma0NotPd,
    SigmadNotPd,
    MeanPartial,
    NotControllable,
    ControllabilityUnchecked,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
}

/// Stopping rule for the fixed-point recursion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvergenceCriterion {
    /// Frobenius norm of the step.
    #[default]
    Frobenius,
    /// Largest absolute entry of the step.
    Componentwise,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub grid_steps: usize,
    pub init_box_half_width: f64,
    pub seed: u64,
    pub max_retries: usize,
    pub rcond_floor: f64,
    pub criterion: ConvergenceCriterion,
    /// Tolerance on the state transition identity residuals.
    pub stm_tol: f64,
    /// Integrate the costate on a twice-finer grid so the covariance
    /// integrator sees exact midpoint values instead of interpolated ones.
    pub fine_costate_grid: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-8,
            max_iter: 500,
            grid_steps: 2000,
            init_box_half_width: 1.0,
            seed: 0,
            max_retries: 5,
            rcond_floor: 1e-12,
            criterion: ConvergenceCriterion::Frobenius,
            stm_tol: 1e-8,
            fine_costate_grid: false,
        }
    }
}

impl SolverConfig {
    pub fn check(&self) -> Result<()> {
        let ok = self.tol > 0.0
            && self.tol < 1.0
            && self.max_iter > 0
            && self.grid_steps > 0
            && self.init_box_half_width > 0.0
            && self.rcond_floor > 0.0
            && self.stm_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Format(format!("invalid solver configuration: {self:?}")))
        }
    }
}

/// Noisy double integrator on `[0, 1]` with the boundary covariances used
/// in the reference experiment.
pub fn make_double_integrator() -> SteeringProblem {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let system = LtvSystem::lti(a, b, SymmetricMatrix::identity(2)).expect("consistent shapes");
    SteeringProblem {
        system,
        t0: 0.0,
        t1: 1.0,
        sigma0: sym(2, &[4.7295, 1.9951, 1.9951, 3.6157]),
        sigmad: sym(2, &[1.1189, 0.7780, 0.7780, 1.7407]),
        mu0: None,
        mud: None,
    }
}

/// Target orbital rate (rad/s) for the 415 km circular orbit.
pub const CW_ORBITAL_RATE: f64 = 1.1276e-3;

/// Clohessy–Wiltshire relative motion, states ordered
/// `(x, y, z, ẋ, ẏ, ż)`, with thrust and noise on the accelerations.
pub fn make_clohessy_wiltshire() -> SteeringProblem {
    let nu = CW_ORBITAL_RATE;
    let mut a = DMatrix::zeros(6, 6);
    for i in 0..3 {
        a[(i, i + 3)] = 1.0;
    }
    // ẍ = 3ν²x + 2νẏ, ÿ = −2νẋ, z̈ = −ν²z
    a[(3, 0)] = 3.0 * nu * nu;
    a[(3, 4)] = 2.0 * nu;
    a[(4, 3)] = -2.0 * nu;
    a[(5, 2)] = -nu * nu;
    let mut b = DMatrix::zeros(6, 3);
    for i in 0..3 {
        b[(i + 3, i)] = 1.0;
    }
    let system = LtvSystem::lti(a, b, SymmetricMatrix::identity(6)).expect("consistent shapes");
    #[rustfmt::skip]
    let sigma0 = sym(6, &[
        5.9148, 3.8100, 2.5815, 2.1795, 4.1628, 1.9270,
        3.8100, 5.5664, 2.8501, 2.1819, 3.8496, 3.3638,
        2.5815, 2.8501, 3.3834, 1.5591, 2.5389, 2.3088,
        2.1795, 2.1819, 1.5591, 3.5850, 2.6187, 2.0098,
        4.1628, 3.8496, 2.5389, 2.6187, 5.1285, 2.5639,
        1.9270, 3.3638, 2.3088, 2.0098, 2.5639, 5.4354,
    ]);
    #[rustfmt::skip]
    let sigmad = sym(6, &[
        1.6431, 1.1138, 1.5453, 1.1729, 1.2916, 0.4077,
        1.1138, 1.9581, 1.4418, 1.0926, 1.2408, 0.4495,
        1.5453, 1.4418, 3.9142, 1.9928, 2.0221, 1.5553,
        1.1729, 1.0926, 1.9928, 2.1027, 1.3448, 0.9645,
        1.2916, 1.2408, 2.0221, 1.3448, 1.7077, 0.7830,
        0.4077, 0.4495, 1.5553, 0.9645, 0.7830, 1.5008,
    ]);
    SteeringProblem {
        system,
        t0: 0.0,
        t1: 1.0,
        sigma0,
        sigmad,
        mu0: None,
        mud: None,
    }
}

/// Reference optimal terminal covariance of the double-integrator example,
/// rounded to four decimals.
pub fn double_integrator_reference_sigma1() -> SymmetricMatrix {
    sym(2, &[4.2282, -0.0504, -0.0504, 1.7726])
}

/// Reference optimal terminal covariance of the Clohessy–Wiltshire example,
/// rounded to four decimals.
pub fn clohessy_wiltshire_reference_sigma1() -> SymmetricMatrix {
    #[rustfmt::skip]
    let s = sym(6, &[
        4.4809, 3.1131, 2.3911, 0.4248, 0.5287, 0.0363,
        3.1131, 5.0291, 3.0649, 0.2636, 0.4523, 0.0130,
        2.3911, 3.0649, 5.1735, 1.3626, 1.0944, 1.2781,
        0.4248, 0.2636, 1.3626, 2.3281, 1.2304, 1.0207,
        0.5287, 0.4523, 1.0944, 1.2304, 1.8847, 0.8106,
        0.0363, 0.0130, 1.2781, 1.0207, 0.8106, 1.7013,
    ]);
    s
}

fn sym(n: usize, row_major: &[f64]) -> SymmetricMatrix {
    SymmetricMatrix::new(DMatrix::from_row_slice(n, n, row_major)).expect("literal is symmetric")
}
