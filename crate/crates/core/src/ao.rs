//! Alternating optimization of the transmit covariances and the IRS phases.

use rand::Rng;
use serde::Serialize;

use crate::builder::{
    bob_rate_row, bti_blocks, build_phase_normalized, build_wz_normalized, phase_matrix, xi_e, BuildError,
    DesignParams, Free, Normalized, PhaseSolution, WzSolution,
};
use crate::channel::{complex_gaussian, watts_to_dbm, ChannelSet};
use crate::conic::{solve, Solution, SolveStatus, SolverError};
use crate::linalg::{eigh, principal_eigpair, unit_modulus, CMatrix, CVector, Hermitian, LinalgError, C64};

/// Relative slack allowed when checking that a step does not increase power.
pub const MONOTONE_SLACK: f64 = 1e-6;

/// Tolerance on the normalized constraint rows when re-validating a design.
pub const FEAS_TOL: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum AoError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("no feasible beamformer among the randomization candidates")]
    RandomizationFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub enum AoStatus {
    Converged,
    MaxIters,
    Infeasible,
}

impl AoStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            AoStatus::Converged => "Converged",
            AoStatus::MaxIters => "MaxIters",
            AoStatus::Infeasible => "Infeasible",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankMetrics {
    /// `lambda_2 / lambda_1` of `W`.
    pub w: f64,
    /// `lambda_2 / lambda_1` of `E`.
    pub e: f64,
}

/// One line of the per-iteration log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub power_watts: f64,
    pub power_dbm: f64,
    pub rank_w: f64,
    pub rank_e: f64,
    /// Largest of the solver's primal, dual and gap residuals.
    pub solver_residual: f64,
    pub solver_iterations: usize,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct DesignSolution {
    pub w_mat: Hermitian,
    pub z_mat: Hermitian,
    /// Transmit beamformer; `w_vec w_vec^H` is what the validator evaluates.
    pub w_vec: CVector,
    pub phi: CVector,
    /// Relaxed phase matrix returned by the last accepted phase step
    /// (`conj(phi) phi^T` when no phase step was taken).
    pub e_mat: Hermitian,
    /// `Tr(W + Z)` in watts after each accepted covariance update.
    pub objective_trace: Vec<f64>,
    pub status: AoStatus,
    pub rank_metrics: RankMetrics,
    pub log: Vec<IterationRecord>,
}

impl DesignSolution {
    pub fn infeasible(n_t: usize, m: usize) -> Self {
        DesignSolution {
            w_mat: Hermitian::zeros(n_t),
            z_mat: Hermitian::zeros(n_t),
            w_vec: CVector::zeros(n_t),
            phi: CVector::from_element(m, C64::new(1.0, 0.0)),
            e_mat: Hermitian::zeros(m),
            objective_trace: Vec::new(),
            status: AoStatus::Infeasible,
            rank_metrics: RankMetrics { w: 0.0, e: 0.0 },
            log: Vec::new(),
        }
    }

    /// Transmitted power `||w||^2 + Tr(Z)` in watts.
    pub fn power(&self) -> f64 {
        self.w_vec.norm_squared() + self.z_mat.trace()
    }

    /// `Tr(Z) / (||w||^2 + Tr(Z))`.
    pub fn an_fraction(&self) -> f64 {
        let p = self.power();
        if p > 0.0 {
            (self.z_mat.trace() / p).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }

    /// Number of covariance updates.
    pub fn iterations(&self) -> usize {
        self.objective_trace.len()
    }

    /// Rank-one transmit covariance `w w^H`.
    pub fn beam_covariance(&self) -> Hermitian {
        Hermitian::outer(&self.w_vec)
    }
}

/// Phases recovered from `E = conj(phi) phi^T`: the principal eigenvector,
/// conjugated and projected entrywise onto the unit circle.
pub fn extract_phases(e_mat: &Hermitian) -> Result<CVector, LinalgError> {
    let (_, v) = principal_eigpair(e_mat)?;
    Ok(v.map(|z| {
        let c = z.conj();
        let r = c.norm();
        if r < 1e-12 {
            C64::new(1.0, 0.0)
        } else {
            c / r
        }
    }))
}

pub fn random_phases<R: Rng + ?Sized>(m: usize, rng: &mut R) -> CVector {
    let angles: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * std::f64::consts::TAU).collect();
    unit_modulus(&angles)
}

/// Everything needed to re-check a candidate beamformer against the
/// fixed-`E` constraints.
pub struct BeamContext<'a> {
    pub norm: &'a Normalized,
    pub e_mat: &'a Hermitian,
    /// AN covariance in watts.
    pub z_mat: &'a Hermitian,
    pub params: &'a DesignParams,
}

impl BeamContext<'_> {
    /// Smallest power along unit direction `u` meeting Bob's constraint,
    /// in watts; `None` if `u` does not reach Bob.
    fn min_power(&self, u: &CVector) -> Option<f64> {
        let unit = self.norm.power_unit;
        let z = self.z_mat.matrix() * C64::from(1.0 / unit);
        let ww = u * u.adjoint();
        let zero = CMatrix::zeros(u.len(), u.len());
        let e = self.e_mat.matrix();
        let g = &self.norm.g_cb;
        let gain = bob_rate_row(g, &ww, &zero, e, 1.0, 0.0);
        let need = -bob_rate_row(g, &zero, &z, e, self.params.gamma, 1.0);
        if gain <= 0.0 {
            return None;
        }
        Some((need / gain).max(0.0) * (1.0 + 1e-9) * unit)
    }

    /// Worst normalized slack of all rows at `W = w w^H` (watts).
    pub fn worst_slack(&self, w: &CVector) -> Result<f64, BuildError> {
        let unit = self.norm.power_unit;
        let w_n = Hermitian::outer(w).scale(1.0 / unit);
        let z_n = self.z_mat.scale(1.0 / unit);
        let e = self.e_mat.matrix();
        let mut worst =
            bob_rate_row(&self.norm.g_cb, w_n.matrix(), z_n.matrix(), e, self.params.gamma, 1.0) / self.params.gamma;
        let xi = xi_e(&w_n, &z_n, self.params.beta)?;
        for k in 0..self.norm.k() {
            let b = bti_blocks(
                xi.matrix(),
                e,
                &self.norm.g_ce[k],
                &self.norm.sigma[k],
                self.params.beta,
                self.norm.noise_eve,
                Free::Xi,
            )?;
            let scale = 1.0 + (self.params.beta - 1.0) * self.norm.noise_eve;
            worst = worst.min(b.tight_value(self.params.rho) / scale);
        }
        Ok(worst)
    }
}

/// Rank-one beamformer from a relaxed `W`: the principal component when
/// `lambda_2 / lambda_1 <= rank_one_tol`, otherwise the cheapest feasible
/// of `L` Gaussian-randomized candidates, each scaled to the minimum power
/// meeting Bob's constraint.
pub fn extract_beamformer<R: Rng + ?Sized>(
    w_mat: &Hermitian,
    ctx: &BeamContext<'_>,
    rng: &mut R,
) -> Result<CVector, AoError> {
    let (vals, vecs) = eigh(w_mat.matrix())?;
    let n = vals.len();
    let l1 = vals[n - 1];
    if l1 <= 0.0 {
        return Ok(CVector::zeros(n));
    }
    if w_mat.rank_one_ratio()? <= ctx.params.rank_one_tol {
        let (l1, v) = principal_eigpair(w_mat)?;
        return Ok(v * C64::from(l1.max(0.0).sqrt()));
    }
    let roots: Vec<f64> = vals.iter().map(|l| l.max(0.0).sqrt()).collect();
    let mut best: Option<(f64, CVector)> = None;
    for _ in 0..ctx.params.randomization_candidates {
        let r = CVector::from_iterator(n, (0..n).map(|i| complex_gaussian(rng) * roots[i]));
        let xi = &vecs * r;
        let norm = xi.norm();
        if norm == 0.0 {
            continue;
        }
        let u = xi / C64::from(norm);
        let Some(p) = ctx.min_power(&u) else { continue };
        let w = &u * C64::from(p.sqrt());
        if ctx.worst_slack(&w)? >= -FEAS_TOL && best.as_ref().map_or(true, |(bp, _)| p < *bp) {
            best = Some((p, w));
        }
    }
    best.map(|(_, w)| w).ok_or(AoError::RandomizationFailed)
}

/// Makes `w` satisfy Bob's constraint exactly (it may fall short by the
/// discarded minor eigenvalues) and reports the worst normalized slack.
pub(crate) fn polish_beamformer(w: &CVector, ctx: &BeamContext<'_>) -> Result<(CVector, f64), AoError> {
    let norm = w.norm();
    if norm == 0.0 {
        return Ok((w.clone(), ctx.worst_slack(w)?));
    }
    let u = w / C64::from(norm);
    let w = match ctx.min_power(&u) {
        Some(p) if p > norm * norm => &u * C64::from(p.sqrt()),
        _ => w.clone(),
    };
    let slack = ctx.worst_slack(&w)?;
    Ok((w, slack))
}

fn solver_residual(s: &Solution) -> f64 {
    s.primal_residual.max(s.dual_residual).max(s.gap)
}

/// Result of one covariance solve at fixed phases.
#[derive(Debug, Clone)]
pub(crate) struct WzStep {
    pub phi: CVector,
    pub sol: WzSolution,
    pub residual: f64,
    pub iterations: usize,
}

pub(crate) fn solve_wz(norm: &Normalized, phi: &CVector, params: &DesignParams) -> Result<Option<WzStep>, AoError> {
    let e = phase_matrix(phi);
    let prog = build_wz_normalized(norm, &e, params)?;
    let s = solve(&prog.program, &params.solver)?;
    if s.status != SolveStatus::Optimal {
        return Ok(None);
    }
    Ok(Some(WzStep { phi: phi.clone(), sol: prog.decode(&s), residual: solver_residual(&s), iterations: s.iterations }))
}

/// Draws random phases until the covariance subproblem is feasible.
pub(crate) fn initial_point<R: Rng + ?Sized>(
    norm: &Normalized,
    params: &DesignParams,
    rng: &mut R,
) -> Result<Option<WzStep>, AoError> {
    for _ in 0..params.init_retries.max(1) {
        let phi = random_phases(norm.m(), rng);
        if let Some(step) = solve_wz(norm, &phi, params)? {
            return Ok(Some(step));
        }
    }
    Ok(None)
}

pub(crate) struct PhaseStep {
    pub sol: PhaseSolution,
    pub phi: CVector,
    pub residual: f64,
    pub iterations: usize,
}

/// Penalized phase subproblem anchored at the current rank-one `E`.
pub(crate) fn solve_phase(
    norm: &Normalized,
    w: &Hermitian,
    z: &Hermitian,
    phi: &CVector,
    params: &DesignParams,
) -> Result<Option<PhaseStep>, AoError> {
    let anchor = phase_matrix(phi);
    let prog = build_phase_normalized(norm, w, z, &anchor, params)?;
    let s = solve(&prog.program, &params.solver)?;
    if s.status != SolveStatus::Optimal {
        return Ok(None);
    }
    let sol = prog.decode(&s);
    let phi = extract_phases(&sol.e_mat)?;
    Ok(Some(PhaseStep { sol, phi, residual: solver_residual(&s), iterations: s.iterations }))
}

fn deadline_passed(params: &DesignParams) -> bool {
    params.solver.deadline.is_some_and(|d| std::time::Instant::now() >= d)
}

/// Builds the final design from the relaxed covariances.
#[allow(clippy::too_many_arguments)]
pub(crate) fn finalize<R: Rng + ?Sized>(
    norm: &Normalized,
    params: &DesignParams,
    step: &WzStep,
    e_relaxed: Hermitian,
    trace: Vec<f64>,
    status: AoStatus,
    log: Vec<IterationRecord>,
    rng: &mut R,
) -> Result<DesignSolution, AoError> {
    let e_fixed = phase_matrix(&step.phi);
    let ctx = BeamContext { norm, e_mat: &e_fixed, z_mat: &step.sol.z_mat, params };
    let w = extract_beamformer(&step.sol.w_mat, &ctx, rng)?;
    let (w_vec, slack) = polish_beamformer(&w, &ctx)?;
    if slack < -FEAS_TOL {
        log::warn!("final design violates a constraint by {:.3e} (normalized)", -slack);
    }
    Ok(DesignSolution {
        rank_metrics: RankMetrics { w: step.sol.w_mat.rank_one_ratio()?, e: e_relaxed.rank_one_ratio()? },
        w_mat: step.sol.w_mat.clone(),
        z_mat: step.sol.z_mat.clone(),
        w_vec,
        phi: step.phi.clone(),
        e_mat: e_relaxed,
        objective_trace: trace,
        status,
        log,
    })
}

fn record(iteration: usize, sol: &WzSolution, rank_e: f64, residual: f64, iterations: usize, accepted: bool) -> IterationRecord {
    IterationRecord {
        iteration,
        power_watts: sol.power,
        power_dbm: watts_to_dbm(sol.power),
        rank_w: sol.w_mat.rank_one_ratio().unwrap_or(f64::NAN),
        rank_e,
        solver_residual: residual,
        solver_iterations: iterations,
        accepted,
    }
}

/// Alternating optimization from random initial phases.
pub fn run_ao<R: Rng + ?Sized>(ch: &ChannelSet, params: &DesignParams, rng: &mut R) -> Result<DesignSolution, AoError> {
    let norm = Normalized::new(ch, params.bti_form)?;
    let Some(init) = initial_point(&norm, params, rng)? else {
        return Ok(DesignSolution::infeasible(ch.n_t(), ch.m()));
    };
    run_ao_from(&norm, params, init, rng)
}

pub(crate) fn run_ao_from<R: Rng + ?Sized>(
    norm: &Normalized,
    params: &DesignParams,
    init: WzStep,
    rng: &mut R,
) -> Result<DesignSolution, AoError> {
    let mut current = init;
    let mut e_relaxed = phase_matrix(&current.phi);
    let mut trace = vec![current.sol.power];
    let mut log = vec![record(1, &current.sol, 0.0, current.residual, current.iterations, true)];
    log::debug!("ao iter 1: {:.6e} W", current.sol.power);
    let mut status = AoStatus::MaxIters;
    while trace.len() < params.n_max {
        if deadline_passed(params) {
            break;
        }
        let Some(phase) = solve_phase(norm, &current.sol.w_mat, &current.sol.z_mat, &current.phi, params)? else {
            status = AoStatus::Converged;
            break;
        };
        let rank_e = phase.sol.e_mat.rank_one_ratio()?;
        let Some(next) = solve_wz(norm, &phase.phi, params)? else {
            status = AoStatus::Converged;
            break;
        };
        let prev = current.sol.power;
        let accepted = next.sol.power <= prev * (1.0 + MONOTONE_SLACK);
        log.push(record(trace.len() + 1, &next.sol, rank_e, next.residual.max(phase.residual), next.iterations + phase.iterations, accepted));
        log::debug!("ao iter {}: {:.6e} W (E rank ratio {rank_e:.2e}, accepted {accepted})", trace.len() + 1, next.sol.power);
        if !accepted {
            status = AoStatus::Converged;
            break;
        }
        current = next;
        e_relaxed = phase.sol.e_mat;
        trace.push(current.sol.power);
        if (prev - current.sol.power).abs() / prev < params.eps_conv {
            status = AoStatus::Converged;
            break;
        }
    }
    finalize(norm, params, &current, e_relaxed, trace, status, log, rng)
}
