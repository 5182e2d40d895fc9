//! Building blocks of the Bernstein-type safe approximation of one Eve's
//! outage constraint
//!
//! ```text
//! Pr{ v^H A v + 2 Re(u^H v) + c >= 0 } >= 1 - rho,   v ~ CN(0, I)
//! ```
//!
//! with `A = S (Xi^T kron E) S`, `u = S vec(E G Xi)`, `S = Sigma^{1/2}` and
//! `c = Tr(G Xi G^H E) + (beta - 1) sigma_e^2`, which is implied by
//!
//! ```text
//! Tr(A) - sqrt(-2 ln rho) x + ln(rho) y + c >= 0,
//! || [vec(A); sqrt(2) u] || <= x,   y I + A >= 0,   y >= 0.
//! ```

use crate::linalg::{eigh, kron, vec, CMatrix, Hermitian, C64};

use super::{herm_coords, split_complex, BuildError};

/// Error covariance of `vec(dG)` in normalized units.
#[derive(Debug, Clone)]
pub enum SigmaModel {
    /// `eps^2 I`.
    Scaled(f64),
    General { sqrt: CMatrix, full: CMatrix },
}

/// Which argument of [`bti_blocks`] is the optimization variable. Only
/// matters for the Kronecker-free form, whose norm and eigenvalue blocks
/// are rewritten in terms of the free matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Free {
    Xi,
    E,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BtiBlocks {
    /// `Tr(A)`.
    pub trace_term: f64,
    /// Real vector whose norm is `||[vec(A); sqrt(2) u]||`.
    pub soc_stack: Vec<f64>,
    /// Hermitian `B` with `y I + B >= 0` equivalent to `y I + A >= 0` given
    /// `y >= 0`; `None` when `y >= 0` alone suffices.
    pub lmi_block: Option<CMatrix>,
    pub c_k: f64,
}

/// `(beta - 1) Z - W`.
pub fn xi_e(w: &Hermitian, z: &Hermitian, beta: f64) -> Result<Hermitian, BuildError> {
    if w.dim() != z.dim() {
        return Err(BuildError::DimMismatch(format!("W is {0}x{0} but Z is {1}x{1}", w.dim(), z.dim())));
    }
    Ok(Hermitian::from_square(z.matrix() * C64::from(beta - 1.0) - w.matrix()))
}

pub(crate) fn xi_raw(w: &CMatrix, z: &CMatrix, beta: f64) -> CMatrix {
    z * C64::from(beta - 1.0) - w
}

fn trace_re(a: &CMatrix) -> f64 {
    a.diagonal().iter().map(|z| z.re).sum()
}

/// `Re Tr(A B)` without forming the product.
pub(crate) fn trace_prod(a: &CMatrix, b: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for k in 0..a.ncols() {
            s += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    s
}

fn max_eig(a: &CMatrix) -> f64 {
    eigh(a).map(|(v, _)| v.last().copied().unwrap_or(0.0)).unwrap_or(f64::NAN)
}

fn min_eig(a: &CMatrix) -> f64 {
    eigh(a).map(|(v, _)| v.first().copied().unwrap_or(0.0)).unwrap_or(f64::NAN)
}

/// Evaluates the four blocks at `(xi, e)`. All outputs are affine in the
/// `free` argument for a fixed value of the other one.
pub fn bti_blocks(
    xi: &CMatrix,
    e: &CMatrix,
    g_bar: &CMatrix,
    sigma: &SigmaModel,
    beta: f64,
    noise_var: f64,
    free: Free,
) -> Result<BtiBlocks, BuildError> {
    let (m, n_t) = (g_bar.nrows(), g_bar.ncols());
    if xi.nrows() != n_t || xi.ncols() != n_t || e.nrows() != m || e.ncols() != m {
        return Err(BuildError::DimMismatch(format!(
            "Xi {}x{} and E {}x{} do not fit a {m}x{n_t} channel",
            xi.nrows(),
            xi.ncols(),
            e.nrows(),
            e.ncols()
        )));
    }
    let eg = e * g_bar;
    let c_k = trace_prod(&(g_bar * xi * g_bar.adjoint()), e) + (beta - 1.0) * noise_var;
    let egx = &eg * xi;
    match sigma {
        SigmaModel::Scaled(eps2) => {
            let eps2 = *eps2;
            let eps = eps2.sqrt();
            let trace_term = eps2 * trace_re(xi) * trace_re(e);
            let (head, lmi_block) = match free {
                Free::Xi => {
                    let lmax = max_eig(e);
                    let lmi = (eps2 > 0.0 && lmax > 0.0).then(|| xi * C64::from(eps2 * lmax));
                    let scale = eps2 * e.norm();
                    (herm_coords(xi).into_iter().map(|v| v * scale).collect::<Vec<_>>(), lmi)
                }
                Free::E => {
                    let lmin = min_eig(xi);
                    let lmi = (eps2 > 0.0 && lmin < 0.0).then(|| e * C64::from(eps2 * lmin));
                    let scale = eps2 * xi.norm();
                    (herm_coords(e).into_iter().map(|v| v * scale).collect::<Vec<_>>(), lmi)
                }
            };
            let u_scale = std::f64::consts::SQRT_2 * eps;
            let mut soc_stack = head;
            soc_stack.extend(split_complex(egx.iter()).into_iter().map(|v| v * u_scale));
            Ok(BtiBlocks { trace_term, soc_stack, lmi_block, c_k })
        }
        SigmaModel::General { sqrt, full } => {
            if sqrt.nrows() != m * n_t {
                return Err(BuildError::DimMismatch("error covariance size".into()));
            }
            let k = kron(&xi.transpose(), e);
            let a = sqrt * &k * sqrt;
            let trace_term = trace_prod(&k, full);
            let u = sqrt * vec(&egx);
            let mut soc_stack = herm_coords(&a);
            soc_stack.extend(split_complex(u.iter()).into_iter().map(|v| v * std::f64::consts::SQRT_2));
            Ok(BtiBlocks { trace_term, soc_stack, lmi_block: Some(a), c_k })
        }
    }
}

/// The quadratic `(A, u, c)` itself, with `sigma_sqrt = Sigma^{1/2}`.
pub fn bti_quadratic(
    xi: &CMatrix,
    e: &CMatrix,
    g_bar: &CMatrix,
    sigma_sqrt: &CMatrix,
    beta: f64,
    noise_var: f64,
) -> (CMatrix, crate::linalg::CVector, f64) {
    let a = sigma_sqrt * kron(&xi.transpose(), e) * sigma_sqrt;
    let u = sigma_sqrt * vec(&(e * g_bar * xi));
    let c = trace_prod(&(g_bar * xi * g_bar.adjoint()), e) + (beta - 1.0) * noise_var;
    (a, u, c)
}

/// `Tr(A) - sqrt(-2 ln rho) x + ln(rho) y + c`.
pub fn bti_row_value(b: &BtiBlocks, x: f64, y: f64, rho: f64) -> f64 {
    b.trace_term - (-2.0 * rho.ln()).sqrt() * x + rho.ln() * y + b.c_k
}

impl BtiBlocks {
    /// Row value at the smallest feasible `x` and `y`.
    pub fn tight_value(&self, rho: f64) -> f64 {
        let x = self.soc_stack.iter().map(|v| v * v).sum::<f64>().sqrt();
        let y = self.lmi_block.as_ref().map_or(0.0, |b| (-min_eig(b)).max(0.0));
        bti_row_value(self, x, y, rho)
    }
}
