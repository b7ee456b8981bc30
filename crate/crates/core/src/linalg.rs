//! Dense symmetric positive-definite solves used by every fitting path.
//!
//! Factorization policy: a plain Cholesky is attempted first. A pivot at or
//! below `PIVOT_RTOL * trace/dim` counts as failure. On failure the diagonal
//! is shifted once by `JITTER_RTOL * trace/dim` and the factorization is
//! retried; a second failure is reported as [`Error::Singular`].

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative pivot floor, measured against the mean diagonal.
pub const PIVOT_RTOL: f64 = 1e-9;
/// Relative diagonal shift applied on the single retry.
pub const JITTER_RTOL: f64 = 1e-10;

/// Lower-triangular Cholesky factor together with the jitter that was needed.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
    jitter: f64,
}

impl Cholesky {
    pub fn factor(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "cholesky needs a non-empty square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("matrix has non-finite entries".into()));
        }
        let scale = a.trace() / n as f64;
        if !(scale > 0.0) {
            return Err(Error::Singular(format!("non-positive mean diagonal {scale}")));
        }
        if let Some(l) = try_factor(a, 0.0, PIVOT_RTOL * scale) {
            return Ok(Self { l, jitter: 0.0 });
        }
        let jitter = JITTER_RTOL * scale;
        match try_factor(a, jitter, PIVOT_RTOL * scale) {
            Some(l) => Ok(Self { l, jitter }),
            None => Err(Error::Singular(format!(
                "cholesky failed on a {n}x{n} matrix even after diagonal jitter {jitter:e}"
            ))),
        }
    }

    /// Diagonal shift that was applied (zero when the plain attempt succeeded).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.l.nrows();
        assert_eq!(b.len(), n, "rhs length must match the factor");
        let mut y = b.clone();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for j in 0..b.ncols() {
            out.set_column(j, &self.solve(&b.column(j).into_owned()));
        }
        out
    }
}

fn try_factor(a: &DMatrix<f64>, shift: f64, floor: f64) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)] + shift;
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            // symmetric input: read the lower triangle only
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

/// Solve `a x = b` for symmetric positive-definite `a`.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{} but rhs has length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    Ok(Cholesky::factor(a)?.solve(b))
}

/// `xᵀ A y`.
pub fn bilinear(x: &DVector<f64>, a: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    x.dot(&(a * y))
}

/// `xᵀ A x`.
pub fn quad_form(x: &DVector<f64>, a: &DMatrix<f64>) -> f64 {
    bilinear(x, a, x)
}

/// Eigendecomposition of a symmetric matrix with eigenvalues clamped at zero.
#[derive(Debug, Clone)]
pub struct SpectralForm {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralForm {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let sym = (a + a.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let eigenvalues = eig.eigenvalues.map(|v| v.max(0.0));
        Self {
            eigenvalues,
            eigenvectors: eig.eigenvectors,
        }
    }

    /// Coordinates of `v` in the eigenbasis.
    pub fn rotate(&self, v: &DVector<f64>) -> DVector<f64> {
        self.eigenvectors.tr_mul(v)
    }
}

/// Symmetrize in place, averaging mirrored entries.
pub(crate) fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}
