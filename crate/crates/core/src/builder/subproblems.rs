use crate::channel::ChannelSet;
use crate::conic::{Cone, ConicProgram, Solution};
use crate::linalg::{CMatrix, CVector, Hermitian, C64};

use super::bti::{bti_blocks, bti_row_value, trace_prod, xi_raw, Free, SigmaModel};
use super::{
    herm_from_params, herm_param_len, herm_psd_coords, phase_matrix, AffineBuilder, BuildError, DesignParams,
    Normalized,
};

/// Slack of Bob's rate constraint
/// `Tr(G_cb [W - (gamma-1) Z] G_cb^H E) - (gamma-1) sigma_b^2`.
/// Non-negative exactly when Bob's rate reaches `log2(gamma)`.
pub fn bob_rate_row(g_cb: &CMatrix, w: &CMatrix, z: &CMatrix, e: &CMatrix, gamma: f64, noise_var_bob: f64) -> f64 {
    let mix = w - z * C64::from(gamma - 1.0);
    trace_prod(&(g_cb * mix * g_cb.adjoint()), e) - (gamma - 1.0) * noise_var_bob
}

fn check_e(e: &Hermitian, m: usize) -> Result<(), BuildError> {
    if e.dim() != m {
        return Err(BuildError::DimMismatch(format!("E is {0}x{0}, expected {m}x{m}", e.dim())));
    }
    Ok(())
}

/// Adds the three cone blocks of Eve `k`'s safe approximation. `xi_of`
/// maps the decoded variables to `Xi`, `e_of` to `E`, and `xy_of` to the
/// auxiliary `(x_k, y_k)` and the slack subtracted from the scalar row.
#[allow(clippy::too_many_arguments)]
fn add_eve_blocks<'a, V: 'a>(
    b: &mut AffineBuilder<'a, V>,
    k: usize,
    norm: &'a Normalized,
    params: &'a DesignParams,
    free: Free,
    probe: (&CMatrix, &CMatrix),
    xi_of: impl Fn(&V) -> CMatrix + Clone + 'a,
    e_of: impl Fn(&V) -> CMatrix + Clone + 'a,
    xy_of: impl Fn(&V) -> (f64, f64, f64) + Clone + 'a,
) -> Result<(), BuildError> {
    let g = &norm.g_ce[k];
    let sigma: &SigmaModel = &norm.sigma[k];
    let (beta, noise, rho) = (params.beta, norm.noise_eve, params.rho);
    // block shapes depend only on the fixed argument
    let shape = bti_blocks(probe.0, probe.1, g, sigma, beta, noise, free)?;
    let blocks = {
        let (xi_of, e_of) = (xi_of.clone(), e_of.clone());
        move |v: &V| bti_blocks(&xi_of(v), &e_of(v), g, sigma, beta, noise, free).expect("shape checked")
    };
    {
        let (blocks, xy_of) = (blocks.clone(), xy_of.clone());
        b.constraint(Cone::NonNeg(1), format!("eve{k} bti"), move |v| {
            let (x, y, slack) = xy_of(v);
            vec![bti_row_value(&blocks(v), x, y, rho) - slack]
        });
    }
    {
        let (blocks, xy_of) = (blocks.clone(), xy_of.clone());
        b.constraint(Cone::Soc(1 + shape.soc_stack.len()), format!("eve{k} soc"), move |v| {
            let mut s = vec![xy_of(v).0];
            s.extend(blocks(v).soc_stack);
            s
        });
    }
    if let Some(lmi) = &shape.lmi_block {
        let n = lmi.nrows();
        let xy_of = xy_of.clone();
        b.constraint(Cone::Psd(2 * n), format!("eve{k} lmi"), move |v| {
            let y = xy_of(v).1;
            let block = blocks(v).lmi_block.expect("shape checked") + CMatrix::identity(n, n) * C64::from(y);
            herm_psd_coords(&block)
        });
    }
    b.constraint(Cone::NonNeg(1), format!("eve{k} y"), move |v| vec![xy_of(v).1]);
    Ok(())
}

#[derive(Debug, Clone)]
pub(crate) struct WzVars {
    w: CMatrix,
    z: CMatrix,
    x: Vec<f64>,
    y: Vec<f64>,
}

/// The `(W, Z, x, y)` subproblem at fixed `E`.
#[derive(Debug, Clone)]
pub struct WzProgram {
    pub program: ConicProgram,
    /// Watts per unit of the program's `W`, `Z` and objective.
    pub power_unit: f64,
    n_t: usize,
    k: usize,
}

#[derive(Debug, Clone)]
pub struct WzSolution {
    pub w_mat: Hermitian,
    pub z_mat: Hermitian,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `Tr(W + Z)` in watts.
    pub power: f64,
}

impl WzProgram {
    pub fn decode(&self, sol: &Solution) -> WzSolution {
        let p = &self.program;
        let n2 = herm_param_len(self.n_t);
        let get = |name: &str| p.block_values(name, &sol.primal).expect("block exists");
        let scale = C64::from(self.power_unit);
        let w = herm_from_params(&get("W")[..n2], self.n_t) * scale;
        let z = herm_from_params(&get("Z")[..n2], self.n_t) * scale;
        let w_mat = Hermitian::from_square(w);
        let z_mat = Hermitian::from_square(z);
        WzSolution {
            power: w_mat.trace() + z_mat.trace(),
            w_mat,
            z_mat,
            x: get("x")[..self.k].to_vec(),
            y: get("y")[..self.k].to_vec(),
        }
    }
}

pub fn build_wz_subproblem(ch: &ChannelSet, e_fixed: &Hermitian, params: &DesignParams) -> Result<WzProgram, BuildError> {
    let norm = Normalized::new(ch, params.bti_form)?;
    build_wz_normalized(&norm, e_fixed, params)
}

pub(crate) fn build_wz_normalized(
    norm: &Normalized,
    e_fixed: &Hermitian,
    params: &DesignParams,
) -> Result<WzProgram, BuildError> {
    params.validate()?;
    let (n_t, m, k) = (norm.n_t(), norm.m(), norm.k());
    check_e(e_fixed, m)?;
    let n2 = herm_param_len(n_t);
    let mut b: AffineBuilder<WzVars> = AffineBuilder::new();
    let ow = b.var("W", n2);
    let oz = b.var("Z", n2);
    let ox = b.var("x", k);
    let oy = b.var("y", k);
    for i in 0..n_t {
        b.cost(ow + i, 1.0);
        b.cost(oz + i, 1.0);
    }
    let e = e_fixed.matrix().clone();
    b.constraint(Cone::Psd(2 * n_t), "W psd", |v: &WzVars| herm_psd_coords(&v.w));
    b.constraint(Cone::Psd(2 * n_t), "Z psd", |v: &WzVars| herm_psd_coords(&v.z));
    {
        let (e, g) = (e.clone(), &norm.g_cb);
        let gamma = params.gamma;
        b.constraint(Cone::NonNeg(1), "bob rate", move |v: &WzVars| {
            vec![bob_rate_row(g, &v.w, &v.z, &e, gamma, 1.0)]
        });
    }
    let probe_xi = CMatrix::zeros(n_t, n_t);
    let beta = params.beta;
    for kk in 0..k {
        let e1 = e.clone();
        add_eve_blocks(
            &mut b,
            kk,
            norm,
            params,
            Free::Xi,
            (&probe_xi, &e),
            move |v: &WzVars| xi_raw(&v.w, &v.z, beta),
            move |_: &WzVars| e1.clone(),
            move |v: &WzVars| (v.x[kk], v.y[kk], 0.0),
        )?;
    }
    let program = b.build(|x: &[f64]| WzVars {
        w: herm_from_params(&x[ow..ow + n2], n_t),
        z: herm_from_params(&x[oz..oz + n2], n_t),
        x: x[ox..ox + k].to_vec(),
        y: x[oy..oy + k].to_vec(),
    });
    Ok(WzProgram { program, power_unit: norm.power_unit, n_t, k })
}

#[derive(Debug, Clone)]
pub(crate) struct PhaseVars {
    e: CMatrix,
    delta: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
}

/// The penalized `(E, delta, x, y)` subproblem at fixed `(W, Z)`.
#[derive(Debug, Clone)]
pub struct PhaseProgram {
    pub program: ConicProgram,
    /// `(I + E_prev)^{-1}`, the linearization direction of `log det(I + E)`.
    pub linearization: CMatrix,
    /// Penalty weight in normalized units.
    pub penalty: f64,
    m: usize,
    k: usize,
}

#[derive(Debug, Clone)]
pub struct PhaseSolution {
    pub e_mat: Hermitian,
    /// Slacks `delta_0` (Bob) then `delta_1..delta_K`, in units of Bob's
    /// noise power.
    pub delta: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl PhaseProgram {
    pub fn decode(&self, sol: &Solution) -> PhaseSolution {
        let p = &self.program;
        let get = |name: &str| p.block_values(name, &sol.primal).expect("block exists");
        PhaseSolution {
            e_mat: Hermitian::from_square(herm_from_params(get("E"), self.m)),
            delta: get("delta").to_vec(),
            x: get("x")[..self.k].to_vec(),
            y: get("y")[..self.k].to_vec(),
        }
    }

    /// `Tr((I + E_prev)^{-1} (E - E_prev))`; zero at the anchor.
    pub fn linearized_penalty(&self, e: &Hermitian, e_prev: &Hermitian) -> f64 {
        trace_prod(&self.linearization, &(e.matrix() - e_prev.matrix()))
    }
}

pub fn build_phase_subproblem(
    ch: &ChannelSet,
    w_fixed: &Hermitian,
    z_fixed: &Hermitian,
    e_prev: &Hermitian,
    params: &DesignParams,
) -> Result<PhaseProgram, BuildError> {
    let norm = Normalized::new(ch, params.bti_form)?;
    build_phase_normalized(&norm, w_fixed, z_fixed, e_prev, params)
}

/// `w_fixed`, `z_fixed` in watts.
pub(crate) fn build_phase_normalized(
    norm: &Normalized,
    w_fixed: &Hermitian,
    z_fixed: &Hermitian,
    e_prev: &Hermitian,
    params: &DesignParams,
) -> Result<PhaseProgram, BuildError> {
    params.validate()?;
    let (n_t, m, k) = (norm.n_t(), norm.m(), norm.k());
    check_e(e_prev, m)?;
    if w_fixed.dim() != n_t || z_fixed.dim() != n_t {
        return Err(BuildError::DimMismatch(format!("W and Z must be {n_t}x{n_t}")));
    }
    let inv_unit = C64::from(1.0 / norm.power_unit);
    let w = w_fixed.matrix() * inv_unit;
    let z = z_fixed.matrix() * inv_unit;
    let lin = (CMatrix::identity(m, m) + e_prev.matrix())
        .try_inverse()
        .filter(|c| c.iter().all(|v| v.re.is_finite() && v.im.is_finite()))
        .ok_or(BuildError::SingularLinearization)?;
    let lin = Hermitian::from_square(lin).into_matrix();
    let penalty = params.penalty_weight(norm.noise_var_bob);

    let m2 = herm_param_len(m);
    let mut b: AffineBuilder<PhaseVars> = AffineBuilder::new();
    let oe = b.var("E", m2);
    let od = b.var("delta", k + 1);
    let ox = b.var("x", k);
    let oy = b.var("y", k);
    // minimize -sum(delta) + kappa Tr(C (E - E_prev))
    for i in 0..=k {
        b.cost(od + i, -1.0);
    }
    let mut unit = vec![0.0; m2];
    for j in 0..m2 {
        unit[j] = 1.0;
        b.cost(oe + j, penalty * trace_prod(&lin, &herm_from_params(&unit, m)));
        unit[j] = 0.0;
    }
    b.offset_cost(-penalty * trace_prod(&lin, e_prev.matrix()));

    b.constraint(Cone::Psd(2 * m), "E psd", |v: &PhaseVars| herm_psd_coords(&v.e));
    b.constraint(Cone::Zero(m), "E diag", move |v: &PhaseVars| (0..m).map(|i| v.e[(i, i)].re - 1.0).collect());
    b.constraint(Cone::NonNeg(k + 1), "delta", |v: &PhaseVars| v.delta.clone());
    {
        let (w, z, g, gamma) = (w.clone(), z.clone(), &norm.g_cb, params.gamma);
        b.constraint(Cone::NonNeg(1), "bob rate", move |v: &PhaseVars| {
            vec![bob_rate_row(g, &w, &z, &v.e, gamma, 1.0) - v.delta[0]]
        });
    }
    let xi = xi_raw(&w, &z, params.beta);
    let probe_e = CMatrix::zeros(m, m);
    for kk in 0..k {
        let xi1 = xi.clone();
        add_eve_blocks(
            &mut b,
            kk,
            norm,
            params,
            Free::E,
            (&xi, &probe_e),
            move |_: &PhaseVars| xi1.clone(),
            |v: &PhaseVars| v.e.clone(),
            move |v: &PhaseVars| (v.x[kk], v.y[kk], v.delta[kk + 1]),
        )?;
    }
    let program = b.build(|x: &[f64]| PhaseVars {
        e: herm_from_params(&x[oe..oe + m2], m),
        delta: x[od..od + k + 1].to_vec(),
        x: x[ox..ox + k].to_vec(),
        y: x[oy..oy + k].to_vec(),
    });
    Ok(PhaseProgram { program, linearization: lin, penalty, m, k })
}

#[derive(Debug, Clone)]
pub(crate) struct SplitVars {
    pw: f64,
    pz: f64,
    w: CMatrix,
    z: CMatrix,
    x: Vec<f64>,
    y: Vec<f64>,
}

/// MRT beamforming with isotropic AN: `W = p_w w w^H`, `Z = p_z P`.
#[derive(Debug, Clone)]
pub struct PowerSplitProgram {
    pub program: ConicProgram,
    pub power_unit: f64,
    pub w_dir: CVector,
    pub projector: Hermitian,
}

#[derive(Debug, Clone)]
pub struct PowerSplitSolution {
    pub p_w: f64,
    pub p_z: f64,
    pub w_mat: Hermitian,
    pub z_mat: Hermitian,
    /// `Tr(W + Z)` in watts.
    pub power: f64,
}

impl PowerSplitProgram {
    pub fn decode(&self, sol: &Solution) -> PowerSplitSolution {
        let p = self.program.block_values("p", &sol.primal).expect("block exists");
        let p_w = p[0].max(0.0) * self.power_unit;
        let p_z = if self.projector.trace() > 0.5 { p[1].max(0.0) * self.power_unit } else { 0.0 };
        let w_mat = Hermitian::outer(&self.w_dir).scale(p_w);
        let z_mat = self.projector.scale(p_z);
        PowerSplitSolution { power: w_mat.trace() + z_mat.trace(), p_w, p_z, w_mat, z_mat }
    }
}

/// `I - h h^H / ||h||^2`.
pub fn orthogonal_projector(h: &CVector) -> Result<Hermitian, BuildError> {
    let n2 = h.norm_squared();
    if !(n2.sqrt() >= 1e-12) {
        return Err(BuildError::DegenerateProjector);
    }
    let n = h.len();
    Ok(Hermitian::from_square(CMatrix::identity(n, n) - (h * h.adjoint()) * C64::from(1.0 / n2)))
}

pub fn build_power_split(
    ch: &ChannelSet,
    w_dir: &CVector,
    phi: &CVector,
    params: &DesignParams,
) -> Result<PowerSplitProgram, BuildError> {
    let norm = Normalized::new(ch, params.bti_form)?;
    build_power_split_normalized(&norm, w_dir, phi, params)
}

pub(crate) fn build_power_split_normalized(
    norm: &Normalized,
    w_dir: &CVector,
    phi: &CVector,
    params: &DesignParams,
) -> Result<PowerSplitProgram, BuildError> {
    params.validate()?;
    let (n_t, m, k) = (norm.n_t(), norm.m(), norm.k());
    if w_dir.len() != n_t || phi.len() != m {
        return Err(BuildError::DimMismatch("MRT direction or phase vector has the wrong length".into()));
    }
    let h_b = crate::channel::effective_channel(&norm.g_cb, phi);
    let projector = orthogonal_projector(&h_b)?;
    let rank = projector.trace().round();
    let e = phase_matrix(phi).into_matrix();
    let ww = Hermitian::outer(w_dir).into_matrix();
    let pp = projector.matrix().clone();

    let mut b: AffineBuilder<SplitVars> = AffineBuilder::new();
    let op = b.var("p", 2);
    let ox = b.var("x", k);
    let oy = b.var("y", k);
    b.cost(op, 1.0);
    b.cost(op + 1, rank);
    b.constraint(Cone::NonNeg(2), "p nonneg", |v: &SplitVars| vec![v.pw, v.pz]);
    if rank == 0.0 {
        // no room for AN: p_z has neither cost nor effect, pin it
        b.constraint(Cone::Zero(1), "p_z zero", |v: &SplitVars| vec![v.pz]);
    }
    {
        let (e, g, gamma) = (e.clone(), &norm.g_cb, params.gamma);
        b.constraint(Cone::NonNeg(1), "bob rate", move |v: &SplitVars| {
            vec![bob_rate_row(g, &v.w, &v.z, &e, gamma, 1.0)]
        });
    }
    let probe_xi = CMatrix::zeros(n_t, n_t);
    let beta = params.beta;
    for kk in 0..k {
        let e1 = e.clone();
        add_eve_blocks(
            &mut b,
            kk,
            norm,
            params,
            Free::Xi,
            (&probe_xi, &e),
            move |v: &SplitVars| xi_raw(&v.w, &v.z, beta),
            move |_: &SplitVars| e1.clone(),
            move |v: &SplitVars| (v.x[kk], v.y[kk], 0.0),
        )?;
    }
    let program = b.build(|x: &[f64]| {
        let (pw, pz) = (x[op], x[op + 1]);
        SplitVars {
            pw,
            pz,
            w: &ww * C64::from(pw),
            z: &pp * C64::from(pz),
            x: x[ox..ox + k].to_vec(),
            y: x[oy..oy + k].to_vec(),
        }
    });
    Ok(PowerSplitProgram { program, power_unit: norm.power_unit, w_dir: w_dir.clone(), projector })
}
