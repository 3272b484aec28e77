//! Numerical certificate for a problem: transition-block identities, LFT
//! symmetry, and the terminal-condition residuals of the CARE map.

use std::io::Write;

use covsteer::lft::{care_map, f2_raw, f4_raw, terminal_residuals, MapContext, LFT_SYM_TOL};
use covsteer::matcore::frobenius_norm;
use covsteer::solver::random_init;
use covsteer::stm::{hamiltonian_matrix, propagate, StmBlocks, EXPM_AGREEMENT_TOL};
use covsteer::{SolverConfig, SteeringProblem};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::args::VerifyArgs;
use crate::error::CliError;
use crate::output::Outputs;
use crate::solve::{check_input, load};

pub const VERIFY_FILE: &str = "verify.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">")]
    Above,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub tol: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct VerifyReport {
    pub grid_steps: usize,
    pub probes: usize,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }

    pub fn table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let mut out = String::new();
        for c in &self.checks {
            let rel = match c.relation {
                Relation::AtMost => "<=",
                Relation::Above => "> ",
            };
            let verdict = if c.passed { "ok" } else { "FAIL" };
            out.push_str(&format!(
                "{:<width$}  {:>12.3e} {rel} {:<9.1e}  {verdict}\n",
                c.name, c.value, c.tol
            ));
        }
        out
    }
}

fn check(name: impl Into<String>, value: f64, relation: Relation, tol: f64) -> Check {
    let passed = match relation {
        Relation::AtMost => value <= tol,
        Relation::Above => value > tol,
    };
    Check {
        name: name.into(),
        value,
        relation,
        tol,
        passed,
    }
}

/// Runs every check. Probe inputs come from `seed`, `seed + 1`, ...
pub fn verify_problem(problem: &SteeringProblem, cfg: &SolverConfig, probes: usize, seed: u64) -> Result<VerifyReport, CliError> {
    use Relation::{Above, AtMost};
    let n = problem.system.n();
    let full = propagate(&problem.system, problem.t0, problem.t1, cfg.grid_steps).map_err(CliError::solve)?;
    let blocks = StmBlocks::from_full(&full);
    let mut checks = Vec::new();

    const IDENTITIES: [&str; 6] = [
        "Φ11ᵀΦ22 − Φ21ᵀΦ12 = I",
        "Φ12ᵀΦ22 symmetric",
        "Φ21ᵀΦ11 symmetric",
        "Φ11Φ22ᵀ − Φ12Φ21ᵀ = I",
        "Φ12Φ11ᵀ symmetric",
        "Φ21Φ22ᵀ symmetric",
    ];
    for (name, r) in IDENTITIES.iter().zip(blocks.residuals) {
        checks.push(check(*name, r, AtMost, cfg.stm_tol));
    }
    if problem.system.is_lti() {
        let m = hamiltonian_matrix(&problem.system, problem.t0).map_err(CliError::solve)?;
        let reference = covsteer::expm::expm(&(m * (problem.t1 - problem.t0)));
        checks.push(check("agreement with expm", frobenius_norm(&(&full - reference)), AtMost, EXPM_AGREEMENT_TOL));
    }
    let (r11, r12) = blocks.block_rconds();
    checks.push(check("rcond Φ11", r11, Above, cfg.rcond_floor));
    checks.push(check("rcond Φ12", r12, Above, cfg.rcond_floor));
    let (w1, w2) = blocks.wide_block_rconds();
    checks.push(check("rank [Φ11ᵀ, −Φ12ᵀ]", w1, Above, cfg.rcond_floor));
    checks.push(check("rank [Φ22, −Φ12]", w2, Above, cfg.rcond_floor));

    let ctx = MapContext::new(blocks, &problem.sigma0, &problem.sigmad, cfg.rcond_floor).map_err(CliError::solve)?;
    let inv_err = frobenius_norm(&(ctx.sigma0inv.as_mat() * problem.sigma0.as_mat() - DMatrix::identity(n, n)));
    checks.push(check("Σ0⁻¹Σ0 = I", inv_err, AtMost, 1e-10));

    let mut asym = [0.0f64; 2];
    let (mut product, mut care, mut sylvester) = (0.0f64, 0.0f64, 0.0f64);
    let mut min_eig = f64::INFINITY;
    let mut lipschitz = 0.0f64;
    let sigmad = ctx.sigmad.as_sym();
    for k in 0..probes as u64 {
        let s = seed.wrapping_add(3 * k);
        let x = random_init(n, 1.0, s);
        if let Ok(raw) = f2_raw(&ctx, &x) {
            asym[0] = asym[0].max(raw.asymmetry());
        }
        if let Ok(raw) = f4_raw(&ctx, &x) {
            asym[1] = asym[1].max(raw.asymmetry());
        }
        let h1 = random_init(n, 3.0, s.wrapping_add(1));
        let p1 = care_map(&h1, sigmad);
        let r = terminal_residuals(sigmad, &h1, &p1);
        product = product.max(r.product);
        care = care.max(r.care);
        sylvester = sylvester.max(r.sylvester);
        min_eig = min_eig.min(p1.add(sigmad).min_eigenvalue());
        let y = random_init(n, 3.0, s.wrapping_add(2));
        let d = h1.sub(&y).frobenius();
        if d > 0.0 {
            lipschitz = lipschitz.max(care_map(&y, sigmad).sub(&p1).frobenius() / d);
        }
    }
    checks.push(check("F2 raw asymmetry", asym[0], AtMost, LFT_SYM_TOL));
    checks.push(check("F4 raw asymmetry", asym[1], AtMost, LFT_SYM_TOL));
    checks.push(check("F3 product residual", product, AtMost, 1e-10));
    checks.push(check("F3 CARE residual", care, AtMost, 1e-9));
    checks.push(check("F3 Sylvester residual", sylvester, AtMost, 1e-9));
    checks.push(check("F3 min eig(P1 + Σd)", min_eig, Above, 0.0));
    checks.push(check("F3 Lipschitz ratio", lipschitz, AtMost, 1.0 + 1e-12));

    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport {
        grid_steps: cfg.grid_steps,
        probes,
        checks,
        passed,
    })
}

pub fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (problem, mut cfg, hash) = load(&args.problem)?;
    if let Some(steps) = args.grid_steps {
        cfg.grid_steps = steps;
    }
    check_input(&problem, &cfg)?;
    let report = verify_problem(&problem, &cfg, args.probes, args.seed)?;
    let _ = write!(out, "{}", report.table());
    if let Some(dir) = &args.out {
        let mut outputs = Outputs::create(dir)?;
        let json = covsteer::json::to_string_pretty(&report).map_err(CliError::solve)?;
        outputs.write(VERIFY_FILE, &json)?;
        let code = if report.passed { 0 } else { crate::error::exit::CHECK_FAILED };
        outputs.finish("verify", Some(hash), Some(cfg), code)?;
    }
    if report.passed {
        let _ = writeln!(out, "all {} checks passed", report.checks.len());
        Ok(())
    } else {
        Err(CliError::ChecksFailed {
            failed: report.failures(),
        })
    }
}
