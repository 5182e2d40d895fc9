//! Conic programs for the two alternating subproblems and the MRT power split.
//!
//! Internally every program works in normalized units: constraint rows are
//! divided by Bob's noise power and powers are measured in
//! `p0 = sigma_b^2 / ||G_cb||_F^2`, so the data handed to the solver is of
//! order one. Decoders convert back to watts.
//!
//! A Hermitian `n x n` variable is stored as `n^2` reals: the diagonal,
//! then `(Re, Im)` of each strictly upper entry `(i, j)`, `i < j`, in
//! column order.

mod bti;
mod subproblems;

pub use bti::{bti_blocks, bti_quadratic, bti_row_value, xi_e, BtiBlocks, Free, SigmaModel};
pub use subproblems::{
    bob_rate_row, build_phase_subproblem, build_power_split, build_wz_subproblem, orthogonal_projector,
    PhaseProgram, PhaseSolution, PowerSplitProgram, PowerSplitSolution, WzProgram, WzSolution,
};
pub(crate) use subproblems::{build_phase_normalized, build_power_split_normalized, build_wz_normalized};

use crate::channel::ChannelSet;
use crate::conic::{smat, svec, Cone, ConicProgram, DenseMatrix, SolverSettings, VarBlock};
use crate::linalg::{as_scaled_identity, embed_matrix, psd_sqrt, CMatrix, Hermitian, LinalgError, C64};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum BuildError {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("I + E is numerically singular")]
    SingularLinearization,
    #[error("MRT direction undefined: Bob's effective channel vanishes")]
    DegenerateProjector,
    #[error("Bob's cascaded channel is zero")]
    DegenerateChannel,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// How the eigenvalue and norm blocks of the Bernstein-type constraints are
/// assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BtiForm {
    /// Kronecker-free equivalent when the error covariance is `eps^2 I`,
    /// full form otherwise.
    Auto,
    /// Always the `N_t M`-dimensional Kronecker form.
    Full,
}

/// Parameters shared by the builders and the optimizer.
#[derive(Debug, Clone)]
pub struct DesignParams {
    pub gamma: f64,
    pub beta: f64,
    pub rho: f64,
    /// Rank-one penalty weight in the units of the configuration file.
    pub kappa: f64,
    pub eps_conv: f64,
    pub n_max: usize,
    pub init_retries: usize,
    pub randomization_candidates: usize,
    pub rank_one_tol: f64,
    pub bti_form: BtiForm,
    pub solver: SolverSettings,
}

impl DesignParams {
    pub fn from_config(cfg: &crate::channel::ScenarioConfig) -> Self {
        DesignParams {
            gamma: cfg.gamma(),
            beta: cfg.beta(),
            rho: cfg.rho,
            kappa: cfg.kappa,
            eps_conv: cfg.eps_conv,
            n_max: cfg.n_max,
            init_retries: 10,
            randomization_candidates: 200,
            rank_one_tol: 1e-3,
            bti_form: BtiForm::Auto,
            solver: SolverSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<(), BuildError> {
        if !(self.gamma >= 1.0) || !(self.beta >= 1.0) {
            return Err(BuildError::InvalidParams("gamma and beta must be at least 1".into()));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(BuildError::InvalidParams("rho must lie in (0, 1]".into()));
        }
        if !(self.kappa >= 0.0) {
            return Err(BuildError::InvalidParams("kappa must be non-negative".into()));
        }
        Ok(())
    }

    /// Penalty weight in normalized units. The configured value is read as
    /// a weight on slacks measured in milliwatts and rescaled to slacks
    /// measured in units of Bob's noise power.
    pub fn penalty_weight(&self, noise_var_bob: f64) -> f64 {
        self.kappa / (noise_var_bob * 1e3)
    }
}

/// Channels rescaled to the solver's units.
#[derive(Debug, Clone)]
pub struct Normalized {
    /// Watts per normalized power unit.
    pub power_unit: f64,
    pub g_cb: CMatrix,
    pub g_ce: Vec<CMatrix>,
    pub sigma: Vec<SigmaModel>,
    /// Eve noise relative to Bob noise.
    pub noise_eve: f64,
    pub noise_var_bob: f64,
}

impl Normalized {
    pub fn new(ch: &ChannelSet, form: BtiForm) -> Result<Self, BuildError> {
        let norm_sq = ch.g_cb.norm_squared();
        if !(norm_sq > 0.0) || !norm_sq.is_finite() {
            return Err(BuildError::DegenerateChannel);
        }
        if !(ch.noise_var_bob > 0.0) {
            return Err(BuildError::InvalidParams("Bob noise power must be positive".into()));
        }
        let s = 1.0 / norm_sq.sqrt();
        let dim = ch.m() * ch.n_t();
        let sigma = ch
            .sigma_e
            .iter()
            .map(|sig| {
                if sig.dim() != dim {
                    return Err(BuildError::DimMismatch(format!(
                        "error covariance is {}x{}, expected {dim}x{dim}",
                        sig.dim(),
                        sig.dim()
                    )));
                }
                let scaled = sig.scale(1.0 / norm_sq);
                match (form, as_scaled_identity(&scaled, 1e-12)) {
                    (BtiForm::Auto, Some(eps2)) => Ok(SigmaModel::Scaled(eps2.max(0.0))),
                    _ => Ok(SigmaModel::General { sqrt: psd_sqrt(&scaled)?.into_matrix(), full: scaled.into_matrix() }),
                }
            })
            .collect::<Result<Vec<_>, BuildError>>()?;
        Ok(Normalized {
            power_unit: ch.noise_var_bob / norm_sq,
            g_cb: &ch.g_cb * C64::from(s),
            g_ce: ch.g_ce_bar.iter().map(|g| g * C64::from(s)).collect(),
            sigma,
            noise_eve: ch.noise_var_eve / ch.noise_var_bob,
            noise_var_bob: ch.noise_var_bob,
        })
    }

    pub fn n_t(&self) -> usize {
        self.g_cb.ncols()
    }

    pub fn m(&self) -> usize {
        self.g_cb.nrows()
    }

    pub fn k(&self) -> usize {
        self.g_ce.len()
    }
}

/// The quantities held fixed by one of the subproblems.
#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub w_mat: Hermitian,
    pub z_mat: Hermitian,
    pub e_mat: Hermitian,
    pub phi: Option<crate::linalg::CVector>,
}

impl FixedPoint {
    /// `max |E - conj(phi) phi^T|` when `phi` is set.
    pub fn consistency_error(&self) -> f64 {
        match &self.phi {
            Some(phi) => (self.e_mat.matrix() - phase_matrix(phi).matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max),
            None => 0.0,
        }
    }
}

/// `E = conj(phi) phi^T`.
pub fn phase_matrix(phi: &crate::linalg::CVector) -> Hermitian {
    Hermitian::from_square(phi.map(|z| z.conj()) * phi.transpose())
}

pub fn herm_param_len(n: usize) -> usize {
    n * n
}

/// Hermitian matrix from its `n^2` real parameters.
pub fn herm_from_params(p: &[f64], n: usize) -> CMatrix {
    debug_assert_eq!(p.len(), n * n);
    let mut h = CMatrix::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = C64::new(p[i], 0.0);
    }
    let mut k = n;
    for j in 1..n {
        for i in 0..j {
            let z = C64::new(p[k], p[k + 1]);
            h[(i, j)] = z;
            h[(j, i)] = z.conj();
            k += 2;
        }
    }
    h
}

/// Inverse of [`herm_from_params`] (reads the diagonal and upper triangle).
pub fn herm_to_params(h: &CMatrix) -> Vec<f64> {
    let n = h.nrows();
    let mut p = Vec::with_capacity(n * n);
    p.extend((0..n).map(|i| h[(i, i)].re));
    for j in 1..n {
        for i in 0..j {
            p.push(h[(i, j)].re);
            p.push(h[(i, j)].im);
        }
    }
    p
}

/// Real coordinates of a Hermitian matrix whose Euclidean norm equals the
/// Frobenius norm: diagonal, then `sqrt(2) (Re, Im)` of the upper entries.
pub fn herm_coords(h: &CMatrix) -> Vec<f64> {
    let n = h.nrows();
    let r2 = std::f64::consts::SQRT_2;
    let mut p = Vec::with_capacity(n * n);
    p.extend((0..n).map(|i| h[(i, i)].re));
    for j in 1..n {
        for i in 0..j {
            p.push(r2 * h[(i, j)].re);
            p.push(r2 * h[(i, j)].im);
        }
    }
    p
}

/// `svec` of the real embedding, the PSD-cone coordinates of a complex
/// Hermitian block.
pub fn herm_psd_coords(h: &CMatrix) -> Vec<f64> {
    svec(&embed_matrix(h))
}

/// Inverse of [`herm_psd_coords`] for slack/dual decoding.
pub fn herm_from_psd_coords(s: &[f64], n: usize) -> CMatrix {
    let r = smat(s, 2 * n);
    CMatrix::from_fn(n, n, |i, j| {
        C64::new(0.5 * (r[(i, j)] + r[(i + n, j + n)]), 0.5 * (r[(i + n, j)] - r[(i, j + n)]))
    })
}

/// Complex vector as `[Re; Im]`.
pub fn split_complex<'a>(v: impl IntoIterator<Item = &'a C64> + Clone) -> Vec<f64> {
    let re = v.clone().into_iter().map(|z| z.re);
    let im = v.into_iter().map(|z| z.im);
    re.chain(im).collect()
}

type GroupFn<'a, V> = Box<dyn Fn(&V) -> Vec<f64> + 'a>;

/// Assembles a [`ConicProgram`] from affine closures. Each cone block is
/// given as a function of the decoded variables returning the slack
/// `s(x)`; the constraint matrix is recovered column by column by
/// evaluating at the unit vectors.
pub(crate) struct AffineBuilder<'a, V> {
    blocks: Vec<VarBlock>,
    num_vars: usize,
    groups: Vec<(Cone, String, GroupFn<'a, V>)>,
    objective: Vec<f64>,
    c_offset: f64,
}

impl<'a, V> AffineBuilder<'a, V> {
    pub fn new() -> Self {
        AffineBuilder { blocks: Vec::new(), num_vars: 0, groups: Vec::new(), objective: Vec::new(), c_offset: 0.0 }
    }

    /// Reserves `len` variables; returns the offset.
    pub fn var(&mut self, name: &str, len: usize) -> usize {
        let offset = self.num_vars;
        self.blocks.push(VarBlock { name: name.to_string(), offset, len });
        self.num_vars += len;
        self.objective.resize(self.num_vars, 0.0);
        offset
    }

    pub fn cost(&mut self, index: usize, coeff: f64) {
        self.objective[index] += coeff;
    }

    pub fn offset_cost(&mut self, c: f64) {
        self.c_offset += c;
    }

    pub fn constraint(&mut self, cone: Cone, label: impl Into<String>, f: impl Fn(&V) -> Vec<f64> + 'a) {
        self.groups.push((cone, label.into(), Box::new(f)));
    }

    pub fn build(self, decode: impl Fn(&[f64]) -> V) -> ConicProgram {
        let n = self.num_vars;
        let mut unit = vec![0.0; n];
        let at_zero = decode(&unit);
        let basis: Vec<V> = (0..n)
            .map(|j| {
                unit[j] = 1.0;
                let v = decode(&unit);
                unit[j] = 0.0;
                v
            })
            .collect();
        let rows: usize = self.groups.iter().map(|(c, _, _)| c.rows()).sum();
        let mut a = DenseMatrix::zeros(rows, n);
        let mut b = Vec::with_capacity(rows);
        let mut start = 0;
        for (cone, label, f) in &self.groups {
            let s0 = f(&at_zero);
            assert_eq!(s0.len(), cone.rows(), "block '{label}' has the wrong length");
            for (j, v) in basis.iter().enumerate() {
                let sj = f(v);
                for (r, (x, y)) in sj.iter().zip(&s0).enumerate() {
                    let coeff = y - x;
                    if coeff != 0.0 {
                        a.set(start + r, j, coeff);
                    }
                }
            }
            b.extend_from_slice(&s0);
            start += cone.rows();
        }
        ConicProgram {
            num_vars: n,
            c: self.objective,
            c_offset: self.c_offset,
            a,
            b,
            cones: self.groups.iter().map(|(c, _, _)| *c).collect(),
            var_names: self.blocks,
            cone_labels: self.groups.iter().map(|(_, l, _)| l.clone()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::testutil::{random_hermitian, rng};

    #[test]
    fn hermitian_parameters_round_trip() {
        let mut r = rng(4);
        for n in 1..5 {
            let h = random_hermitian(&mut r, n);
            let p = herm_to_params(h.matrix());
            assert_eq!(p.len(), herm_param_len(n));
            assert!((herm_from_params(&p, n) - h.matrix()).norm() < 1e-14);
            let c = herm_coords(h.matrix());
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - h.norm_fro()).abs() < 1e-12);
            let s = herm_psd_coords(h.matrix());
            assert!((herm_from_psd_coords(&s, n) - h.matrix()).norm() < 1e-12);
        }
    }

    #[test]
    fn trace_is_sum_of_diagonal_parameters() {
        let mut r = rng(8);
        let h = random_hermitian(&mut r, 4);
        let p = herm_to_params(h.matrix());
        assert!((p[..4].iter().sum::<f64>() - h.trace()).abs() < 1e-12);
    }
}
