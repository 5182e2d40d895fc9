//! Dense complex matrix kernel.
//!
//! Matrices are `nalgebra` column-major `DMatrix<C64>`, so [`vec`] is a plain
//! copy of the storage: `vec(A)[i + j * rows] == A[(i, j)]`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;
pub type RMatrix = DMatrix<f64>;

/// Relative eigenvalue tolerance below zero that is still treated as PSD.
pub const EIG_CLAMP_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:.3e} < -{tol:.3e})")]
    NotPsd { min_eig: f64, tol: f64 },
    #[error("eigensolver did not converge")]
    NoConvergence,
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
}

/// A square complex matrix that is Hermitian by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Hermitian(CMatrix);

impl Hermitian {
    /// Symmetrizes `a` as `(a + a^H) / 2`.
    pub fn new(a: CMatrix) -> Result<Self, LinalgError> {
        if a.nrows() != a.ncols() {
            return Err(LinalgError::DimMismatch(format!(
                "Hermitian needs a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let h = (&a + a.adjoint()) * C64::new(0.5, 0.0);
        Ok(Hermitian(h))
    }

    /// Panics when `a` is not square; for internal call sites that
    /// construct the matrix themselves.
    pub fn from_square(a: CMatrix) -> Self {
        Self::new(a).expect("square matrix")
    }

    pub fn zeros(n: usize) -> Self {
        Hermitian(CMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Hermitian(CMatrix::identity(n, n))
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        Hermitian(CMatrix::identity(n, n) * C64::new(s, 0.0))
    }

    /// `x x^H`.
    pub fn outer(x: &CVector) -> Self {
        Hermitian::from_square(x * x.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn norm_fro(&self) -> f64 {
        self.0.norm()
    }

    pub fn scale(&self, s: f64) -> Hermitian {
        Hermitian(&self.0 * C64::new(s, 0.0))
    }

    pub fn add(&self, other: &Hermitian) -> Hermitian {
        Hermitian(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Hermitian) -> Hermitian {
        Hermitian(&self.0 - &other.0)
    }

    /// Eigenvalues in ascending order with matching eigenvector columns.
    pub fn eigh(&self) -> Result<(Vec<f64>, CMatrix), LinalgError> {
        eigh(&self.0)
    }

    pub fn min_eigenvalue(&self) -> Result<f64, LinalgError> {
        Ok(self.eigh()?.0.first().copied().unwrap_or(0.0))
    }

    pub fn max_eigenvalue(&self) -> Result<f64, LinalgError> {
        Ok(self.eigh()?.0.last().copied().unwrap_or(0.0))
    }

    /// Projection onto the PSD cone by eigenvalue clipping.
    pub fn psd_part(&self) -> Result<Hermitian, LinalgError> {
        let (vals, vecs) = self.eigh()?;
        let clipped: Vec<f64> = vals.iter().map(|&l| l.max(0.0)).collect();
        Ok(recompose(&clipped, &vecs))
    }

    /// Ratio of the second largest to the largest eigenvalue, 0 for a zero
    /// or 1x1 matrix.
    pub fn rank_one_ratio(&self) -> Result<f64, LinalgError> {
        let (vals, _) = self.eigh()?;
        let n = vals.len();
        if n < 2 {
            return Ok(0.0);
        }
        let l1 = vals[n - 1];
        if l1 <= 0.0 {
            return Ok(0.0);
        }
        Ok(vals[n - 2].max(0.0) / l1)
    }

    /// Largest entrywise deviation from Hermitian symmetry, for diagnostics.
    pub fn hermitian_residual(a: &CMatrix) -> f64 {
        let d = a - a.adjoint();
        d.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `x^H A x`, real for Hermitian `A`.
    pub fn quad_form(&self, x: &CVector) -> f64 {
        (x.adjoint() * &self.0 * x)[(0, 0)].re
    }
}

/// Full Hermitian eigendecomposition, eigenvalues ascending.
pub fn eigh(a: &CMatrix) -> Result<(Vec<f64>, CMatrix), LinalgError> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(LinalgError::DimMismatch("eigh needs a square matrix".into()));
    }
    if n == 0 {
        return Ok((Vec::new(), CMatrix::zeros(0, 0)));
    }
    let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or(LinalgError::NoConvergence)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((vals, vecs))
}

/// `V diag(vals) V^H`.
pub fn recompose(vals: &[f64], vecs: &CMatrix) -> Hermitian {
    let n = vecs.nrows();
    let mut out = CMatrix::zeros(n, n);
    for (k, &l) in vals.iter().enumerate() {
        if l == 0.0 {
            continue;
        }
        let v = vecs.column(k);
        out += (&v * v.adjoint()) * C64::new(l, 0.0);
    }
    Hermitian::from_square(out)
}

/// Kronecker product: `out[(i*b.rows + k, j*b.cols + l)] = a[(i,j)] * b[(k,l)]`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Column-major stacking into a column vector.
pub fn vec(a: &CMatrix) -> CVector {
    CVector::from_column_slice(a.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &CVector, rows: usize, cols: usize) -> Result<CMatrix, LinalgError> {
    if v.len() != rows * cols {
        return Err(LinalgError::DimMismatch(format!(
            "cannot reshape length {} into {rows}x{cols}",
            v.len()
        )));
    }
    Ok(CMatrix::from_column_slice(rows, cols, v.as_slice()))
}

/// Hermitian PSD square root. Eigenvalues down to `-1e-9 * ||A||_F` are
/// clamped to zero; anything more negative is rejected.
pub fn psd_sqrt(a: &Hermitian) -> Result<Hermitian, LinalgError> {
    let (vals, vecs) = a.eigh()?;
    let tol = EIG_CLAMP_TOL * a.norm_fro();
    if let Some(&min) = vals.first() {
        if min < -tol {
            return Err(LinalgError::NotPsd { min_eig: min, tol });
        }
    }
    let roots: Vec<f64> = vals.iter().map(|&l| l.max(0.0).sqrt()).collect();
    Ok(recompose(&roots, &vecs))
}

/// Scales `v` so its first entry with non-negligible magnitude is real and
/// positive. Makes eigenvector outputs deterministic.
pub fn fix_global_phase(v: &mut CVector) {
    let peak = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return;
    }
    if let Some(first) = v.iter().find(|z| z.norm() > 1e-12 * peak).copied() {
        let rot = first.conj() / first.norm();
        for z in v.iter_mut() {
            *z *= rot;
        }
    }
}

/// Largest eigenvalue and its unit eigenvector (global phase fixed by
/// [`fix_global_phase`]).
pub fn principal_eigpair(a: &Hermitian) -> Result<(f64, CVector), LinalgError> {
    if a.dim() == 0 {
        return Err(LinalgError::DimMismatch("empty matrix".into()));
    }
    let (vals, vecs) = a.eigh()?;
    let n = vals.len();
    let mut v: CVector = vecs.column(n - 1).into_owned();
    let norm = v.norm();
    if norm > 0.0 {
        v /= C64::new(norm, 0.0);
    }
    fix_global_phase(&mut v);
    Ok((vals[n - 1], v))
}

/// Real symmetric embedding `[[Re A, -Im A], [Im A, Re A]]`.
pub fn complex_to_real_embed(a: &Hermitian) -> RMatrix {
    embed_matrix(a.matrix())
}

pub(crate) fn embed_matrix(a: &CMatrix) -> RMatrix {
    let n = a.nrows();
    let mut out = RMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        for i in 0..n {
            let z = a[(i, j)];
            out[(i, j)] = z.re;
            out[(i + n, j + n)] = z.re;
            out[(i, j + n)] = -z.im;
            out[(i + n, j)] = z.im;
        }
    }
    out
}

/// `diag(x)` for a complex vector.
pub fn diag(x: &CVector) -> CMatrix {
    CMatrix::from_diagonal(x)
}

pub fn conj_vec(x: &CVector) -> CVector {
    x.map(|z| z.conj())
}

/// `Tr(A^H B)` real part, the real inner product of two complex matrices.
pub fn inner_re(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Checks whether `a` equals `s * I` up to `rel_tol * ||a||_F`; returns `s`.
pub fn as_scaled_identity(a: &Hermitian, rel_tol: f64) -> Option<f64> {
    let n = a.dim();
    if n == 0 {
        return Some(0.0);
    }
    let s = a.trace() / n as f64;
    let resid = (a.matrix() - CMatrix::identity(n, n) * C64::new(s, 0.0)).norm();
    if resid <= rel_tol * a.norm_fro().max(f64::MIN_POSITIVE) {
        Some(s)
    } else {
        None
    }
}

/// Entries `exp(j * theta_m)` from a list of angles.
pub fn unit_modulus(angles: &[f64]) -> CVector {
    CVector::from_iterator(angles.len(), angles.iter().map(|&t| C64::from_polar(1.0, t)))
}
