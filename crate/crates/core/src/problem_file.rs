//! JSON problem files.
//!
//! ```json
//! {"n": 2, "m": 1, "t0": 0, "t1": 1,
//!  "system": {"kind": "lti", "A": [[0,1],[0,0]], "B": [[0],[1]], "Q": [[1,0],[0,1]]},
//!  "sigma0": [[2,0],[0,2]], "sigmad": [[1,0],[0,1]],
//!  "solver": {"maxIter": 1000}}
//! ```
//!
//! Time-varying systems use `{"kind": "grid", "samples": [{"t", "A", "B", "Q"}, ...]}`.
//! Unknown fields are rejected.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json;
use crate::matcore::{from_rows, to_rows, SymmetricMatrix};
use crate::model::{LtvSystem, SolverConfig, SteeringProblem, SystemSample};

type Rows = Vec<Vec<f64>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub n: usize,
    pub m: usize,
    pub t0: f64,
    pub t1: f64,
    pub system: SystemSpec,
    pub sigma0: Rows,
    pub sigmad: Rows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mud: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SystemSpec {
    Lti {
        #[serde(rename = "A")]
        a: Rows,
        #[serde(rename = "B")]
        b: Rows,
        #[serde(rename = "Q")]
        q: Rows,
    },
    Grid { samples: Vec<SampleSpec> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    pub t: f64,
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "Q")]
    pub q: Rows,
}

fn matrix(rows: &Rows, nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    if rows.len() != nrows {
        return Err(Error::DimensionMismatch {
            expected: nrows,
            found: rows.len(),
        });
    }
    let m = if nrows == 0 {
        DMatrix::zeros(0, ncols)
    } else {
        from_rows(rows)?
    };
    if m.ncols() != ncols {
        return Err(Error::DimensionMismatch {
            expected: ncols,
            found: m.ncols(),
        });
    }
    Ok(m)
}

fn symmetric(rows: &Rows, n: usize) -> Result<SymmetricMatrix> {
    SymmetricMatrix::new(matrix(rows, n, n)?)
}

fn vector(v: &Option<Vec<f64>>, n: usize) -> Result<Option<DVector<f64>>> {
    match v {
        None => Ok(None),
        Some(v) if v.len() == n => Ok(Some(DVector::from_column_slice(v))),
        Some(v) => Err(Error::DimensionMismatch {
            expected: n,
            found: v.len(),
        }),
    }
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Builds the problem and the solver configuration (defaults filled in).
    pub fn to_problem(&self) -> Result<(SteeringProblem, SolverConfig)> {
        let (n, m) = (self.n, self.m);
        if n == 0 {
            return Err(Error::Format("state dimension n must be positive".into()));
        }
        let system = match &self.system {
            SystemSpec::Lti { a, b, q } => LtvSystem::lti(matrix(a, n, n)?, matrix(b, n, m)?, symmetric(q, n)?)?,
            SystemSpec::Grid { samples } => LtvSystem::from_samples(
                samples
                    .iter()
                    .map(|s| {
                        Ok(SystemSample {
                            t: s.t,
                            a: matrix(&s.a, n, n)?,
                            b: matrix(&s.b, n, m)?,
                            q: symmetric(&s.q, n)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?,
            )?,
        };
        let problem = SteeringProblem {
            system,
            t0: self.t0,
            t1: self.t1,
            sigma0: symmetric(&self.sigma0, n)?,
            sigmad: symmetric(&self.sigmad, n)?,
            mu0: vector(&self.mu0, n)?,
            mud: vector(&self.mud, n)?,
        };
        Ok((problem, self.solver.clone().unwrap_or_default()))
    }

    pub fn from_problem(problem: &SteeringProblem, solver: Option<SolverConfig>) -> Self {
        let sys = &problem.system;
        let system = if sys.is_lti() {
            let s = &sys.samples()[0];
            SystemSpec::Lti {
                a: to_rows(&s.a),
                b: to_rows(&s.b),
                q: s.q.to_rows(),
            }
        } else {
            SystemSpec::Grid {
                samples: sys
                    .samples()
                    .iter()
                    .map(|s| SampleSpec {
                        t: s.t,
                        a: to_rows(&s.a),
                        b: to_rows(&s.b),
                        q: s.q.to_rows(),
                    })
                    .collect(),
            }
        };
        ProblemFile {
            n: sys.n(),
            m: sys.m(),
            t0: problem.t0,
            t1: problem.t1,
            system,
            sigma0: problem.sigma0.to_rows(),
            sigmad: problem.sigmad.to_rows(),
            mu0: problem.mu0.as_ref().map(|v| v.iter().copied().collect()),
            mud: problem.mud.as_ref().map(|v| v.iter().copied().collect()),
            solver,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        json::to_string_pretty(self)
    }
}

/// Reads and converts a problem file.
pub fn load_problem(path: &Path) -> Result<(SteeringProblem, SolverConfig)> {
    let text = std::fs::read_to_string(path)?;
    ProblemFile::parse(&text)?.to_problem()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_clohessy_wiltshire, make_double_integrator};

    const SCALAR: &str = r#"{"n":1,"m":1,"t0":0,"t1":1,
        "system":{"kind":"lti","A":[[0]],"B":[[1]],"Q":[[0]]},
        "sigma0":[[1]],"sigmad":[[2]]}"#;

    #[test]
    fn parses_minimal_file() {
        let (p, cfg) = ProblemFile::parse(SCALAR).unwrap().to_problem().unwrap();
        assert_eq!(p.system.n(), 1);
        assert!(p.system.is_lti());
        assert_eq!(p.sigmad.as_mat()[(0, 0)], 2.0);
        assert_eq!(cfg, SolverConfig::default());
    }

    #[test]
    fn partial_solver_section_fills_defaults() {
        let text = SCALAR.replace(r#""sigmad":[[2]]"#, r#""sigmad":[[2]],"solver":{"maxIter":7}"#);
        let (_, cfg) = ProblemFile::parse(&text).unwrap().to_problem().unwrap();
        assert_eq!(cfg.max_iter, 7);
        assert_eq!(cfg.tol, 1e-8);
    }

    #[test]
    fn rejects_unknown_fields() {
        let top = SCALAR.replace(r#""t0":0"#, r#""t0":0,"extra":1"#);
        assert!(ProblemFile::parse(&top).is_err());
        let sys = SCALAR.replace(r#""kind":"lti""#, r#""kind":"lti","C":[[1]]"#);
        assert!(ProblemFile::parse(&sys).is_err());
        let solver = SCALAR.replace(r#""sigmad":[[2]]"#, r#""sigmad":[[2]],"solver":{"damping":0.5}"#);
        assert!(ProblemFile::parse(&solver).is_err());
    }

    #[test]
    fn rejects_shape_mismatch() {
        let text = SCALAR.replace(r#""B":[[1]]"#, r#""B":[[1,2]]"#);
        assert!(ProblemFile::parse(&text).unwrap().to_problem().is_err());
        let text = SCALAR.replace(r#""sigmad":[[2]]"#, r#""sigmad":[[2]],"mu0":[1,2],"mud":[0]"#);
        assert!(ProblemFile::parse(&text).unwrap().to_problem().is_err());
    }

    #[test]
    fn grid_system_roundtrip() {
        let text = r#"{"n":1,"m":1,"t0":0,"t1":1,
            "system":{"kind":"grid","samples":[
                {"t":0,"A":[[0]],"B":[[1]],"Q":[[1]]},
                {"t":1,"A":[[1]],"B":[[1]],"Q":[[1]]}]},
            "sigma0":[[1]],"sigmad":[[2]]}"#;
        let file = ProblemFile::parse(text).unwrap();
        let (p, _) = file.to_problem().unwrap();
        assert!(!p.system.is_lti());
        assert_eq!(p.system.eval(0.5).unwrap().a[(0, 0)], 0.5);
        assert_eq!(ProblemFile::from_problem(&p, None), file);
    }

    #[test]
    fn builtins_roundtrip_exactly() {
        for p in [make_double_integrator(), make_clohessy_wiltshire()] {
            let text = ProblemFile::from_problem(&p, None).to_json().unwrap();
            let (back, _) = ProblemFile::parse(&text).unwrap().to_problem().unwrap();
            assert_eq!(back, p);
        }
    }
}
