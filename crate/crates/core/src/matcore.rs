//! Symmetric-matrix kernels shared by the rest of the crate.
//!
//! Everything here works on dense `nalgebra` matrices. Symmetric values are
//! stored exactly symmetric: construction averages the input with its
//! transpose after checking that the two agree to within a tolerance.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest Frobenius asymmetry accepted when symmetrizing raw input.
pub const SYM_TOL: f64 = 1e-9;

/// Relative eigenvalue floor for positive definiteness.
pub const SPD_REL_TOL: f64 = 1e-12;

/// A real symmetric matrix, stored with `m[(i, j)] == m[(j, i)]` exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

/// A symmetric positive-definite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix(SymmetricMatrix);

/// Averages `raw` with its transpose if the two differ by at most `tol`
/// in Frobenius norm.
pub fn symmetrize(raw: &DMatrix<f64>, tol: f64) -> Result<SymmetricMatrix> {
    if !raw.is_square() {
        return Err(Error::NotSquare {
            rows: raw.nrows(),
            cols: raw.ncols(),
        });
    }
    if raw.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { what: "matrix" });
    }
    let asym = asymmetry(raw);
    if asym > tol {
        return Err(Error::Asymmetry {
            asymmetry: asym,
            tol,
        });
    }
    Ok(SymmetricMatrix::symmetrized(raw))
}

/// `‖m − mᵀ‖_F`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut acc = 0.0;
    for j in 0..n {
        for i in 0..n {
            let d = m[(i, j)] - m[(j, i)];
            acc += d * d;
        }
    }
    acc.sqrt()
}

pub fn frobenius_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Symmetric eigendecomposition `m = V diag(λ) Vᵀ` with ascending eigenvalues.
pub fn eigh(m: &SymmetricMatrix) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.0.clone());
    let n = m.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Applies a scalar function through the spectrum: `V diag(f(λ)) Vᵀ`.
pub fn spectral_map(m: &SymmetricMatrix, f: impl Fn(f64) -> f64) -> SymmetricMatrix {
    let (values, vectors) = eigh(m);
    from_spectrum(&values.map(f), &vectors)
}

pub(crate) fn from_spectrum(values: &DVector<f64>, vectors: &DMatrix<f64>) -> SymmetricMatrix {
    let scaled = vectors * DMatrix::from_diagonal(values);
    SymmetricMatrix::symmetrized(&(scaled * vectors.transpose()))
}

/// Principal square root, computed by square-rooting eigenvalues.
pub fn principal_sqrt(m: &SpdMatrix) -> SpdMatrix {
    let root = spectral_map(m.as_sym(), f64::sqrt);
    SpdMatrix(root)
}

/// `true` when the spectrum clears the relative positive-definiteness floor.
pub fn is_positive_definite(m: &SymmetricMatrix) -> bool {
    SpdMatrix::try_new(m.clone()).is_ok()
}

/// Reciprocal 2-norm condition number `σ_min / σ_max` (0 for the zero matrix).
pub fn rcond(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    if max == 0.0 || !max.is_finite() {
        return 0.0;
    }
    sv.min() / max
}

/// Half-vectorization: column-major lower triangle.
pub fn vech(m: &SymmetricMatrix) -> Vec<f64> {
    let n = m.dim();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for j in 0..n {
        for i in j..n {
            out.push(m.0[(i, j)]);
        }
    }
    out
}

/// Inverse of [`vech`].
pub fn unvech(v: &[f64], n: usize) -> Result<SymmetricMatrix> {
    let expected = n * (n + 1) / 2;
    if v.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: v.len(),
        });
    }
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in j..n {
            m[(i, j)] = v[k];
            m[(j, i)] = v[k];
            k += 1;
        }
    }
    Ok(SymmetricMatrix(m))
}

/// Length of `vech` for dimension `n`, and back.
pub fn vech_len(n: usize) -> usize {
    n * (n + 1) / 2
}

pub fn dim_from_vech_len(len: usize) -> Option<usize> {
    let mut n = 0;
    while vech_len(n) < len {
        n += 1;
    }
    (vech_len(n) == len).then_some(n)
}

/// Builds a nalgebra matrix from row-major nested rows.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch {
            expected: ncols,
            found: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl SymmetricMatrix {
    /// Symmetrizes with the default [`SYM_TOL`].
    pub fn new(raw: DMatrix<f64>) -> Result<Self> {
        symmetrize(&raw, SYM_TOL)
    }

    /// `(m + mᵀ) / 2` with no tolerance check. Use only where symmetry holds
    /// by construction up to roundoff.
    pub(crate) fn symmetrized(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut out = m.clone();
        for j in 0..n {
            for i in (j + 1)..n {
                let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
                out[(i, j)] = avg;
                out[(j, i)] = avg;
            }
        }
        SymmetricMatrix(out)
    }

    pub fn identity(n: usize) -> Self {
        SymmetricMatrix(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        SymmetricMatrix(DMatrix::zeros(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymmetricMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_mat(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        eigh(self).0.min()
    }

    pub fn add(&self, other: &SymmetricMatrix) -> SymmetricMatrix {
        SymmetricMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymmetricMatrix) -> SymmetricMatrix {
        SymmetricMatrix(&self.0 - &other.0)
    }

    pub fn scale(&self, s: f64) -> SymmetricMatrix {
        SymmetricMatrix(&self.0 * s)
    }

    pub fn frobenius(&self) -> f64 {
        frobenius_norm(&self.0)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        to_rows(&self.0)
    }
}

impl SpdMatrix {
    pub fn try_new(m: SymmetricMatrix) -> Result<Self> {
        let (values, _) = eigh(&m);
        let min = values.min();
        let max_abs = values.amax();
        if !(min > SPD_REL_TOL * max_abs.max(1.0)) {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: min,
            });
        }
        Ok(SpdMatrix(m))
    }

    pub fn from_raw(raw: DMatrix<f64>) -> Result<Self> {
        Self::try_new(SymmetricMatrix::new(raw)?)
    }

    pub fn identity(n: usize) -> Self {
        SpdMatrix(SymmetricMatrix::identity(n))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn as_sym(&self) -> &SymmetricMatrix {
        &self.0
    }

    pub fn as_mat(&self) -> &DMatrix<f64> {
        &self.0 .0
    }

    pub fn into_sym(self) -> SymmetricMatrix {
        self.0
    }

    /// Inverse through the eigendecomposition; the result is symmetric positive definite.
    pub fn inverse(&self) -> SpdMatrix {
        SpdMatrix(spectral_map(&self.0, f64::recip))
    }
}

impl From<SpdMatrix> for SymmetricMatrix {
    fn from(m: SpdMatrix) -> Self {
        m.0
    }
}

impl AsRef<DMatrix<f64>> for SymmetricMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

impl Serialize for SymmetricMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymmetricMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let m = from_rows(&rows).map_err(serde::de::Error::custom)?;
        SymmetricMatrix::new(m).map_err(serde::de::Error::custom)
    }
}
