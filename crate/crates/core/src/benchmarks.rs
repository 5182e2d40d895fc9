//! The proposed design and the three reference schemes it is compared with.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ao::{
    finalize, initial_point, random_phases, run_ao_from, solve_phase, AoError, AoStatus, DesignSolution,
    IterationRecord, RankMetrics, MONOTONE_SLACK,
};
use crate::builder::{
    build_power_split_normalized, orthogonal_projector, phase_matrix, BuildError, DesignParams, Normalized,
    PowerSplitSolution,
};
use crate::channel::{effective_channel, watts_to_dbm, ChannelSet};
use crate::conic::{solve, SolveStatus};
use crate::linalg::{CVector, Hermitian, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemeKind {
    /// Alternating optimization of `(W, Z)` and the IRS phases.
    Proposed,
    /// Optimized `(W, Z)` at random IRS phases.
    RandomIrs,
    /// MRT beam with isotropic AN, alternating with the IRS phases.
    OptimizedMrt,
    /// MRT beam with isotropic AN at random IRS phases.
    RandomMrt,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 4] =
        [SchemeKind::Proposed, SchemeKind::RandomIrs, SchemeKind::OptimizedMrt, SchemeKind::RandomMrt];

    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::Proposed => "proposed",
            SchemeKind::RandomIrs => "random_irs",
            SchemeKind::OptimizedMrt => "optimized_mrt",
            SchemeKind::RandomMrt => "random_mrt",
        }
    }

    /// Schemes that start from the same random phases share an index, so
    /// they can be driven by the same random stream.
    pub fn family(&self) -> u64 {
        match self {
            SchemeKind::Proposed | SchemeKind::RandomIrs => 0,
            SchemeKind::OptimizedMrt | SchemeKind::RandomMrt => 1,
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| format!("unknown scheme `{s}` (expected proposed, random_irs, optimized_mrt or random_mrt)"))
    }
}

/// MRT direction toward Bob's effective channel and the projector onto
/// its orthogonal complement, which carries the AN.
#[derive(Debug, Clone)]
pub struct MrtDirection {
    pub w_dir: CVector,
    pub an_projector: Hermitian,
}

pub fn mrt_direction(ch: &ChannelSet, phi: &CVector) -> Result<MrtDirection, BuildError> {
    mrt_from_cascade(&ch.g_cb, phi)
}

fn mrt_from_cascade(g_cb: &crate::linalg::CMatrix, phi: &CVector) -> Result<MrtDirection, BuildError> {
    if phi.len() != g_cb.nrows() {
        return Err(BuildError::DimMismatch(format!("phi has {} entries, expected {}", phi.len(), g_cb.nrows())));
    }
    let h = effective_channel(g_cb, phi);
    let an_projector = orthogonal_projector(&h)?;
    let w_dir = &h / C64::from(h.norm());
    Ok(MrtDirection { w_dir, an_projector })
}

struct MrtStep {
    phi: CVector,
    dir: MrtDirection,
    split: PowerSplitSolution,
    residual: f64,
    iterations: usize,
}

fn solve_split(norm: &Normalized, phi: &CVector, params: &DesignParams) -> Result<Option<MrtStep>, AoError> {
    let dir = mrt_from_cascade(&norm.g_cb, phi)?;
    let prog = build_power_split_normalized(norm, &dir.w_dir, phi, params)?;
    let s = solve(&prog.program, &params.solver)?;
    if s.status != SolveStatus::Optimal {
        return Ok(None);
    }
    Ok(Some(MrtStep {
        phi: phi.clone(),
        split: prog.decode(&s),
        dir,
        residual: s.primal_residual.max(s.dual_residual).max(s.gap),
        iterations: s.iterations,
    }))
}

fn mrt_initial<R: Rng + ?Sized>(
    norm: &Normalized,
    params: &DesignParams,
    rng: &mut R,
) -> Result<Option<MrtStep>, AoError> {
    for _ in 0..params.init_retries.max(1) {
        let phi = random_phases(norm.m(), rng);
        if let Some(step) = solve_split(norm, &phi, params)? {
            return Ok(Some(step));
        }
    }
    Ok(None)
}

fn mrt_record(iteration: usize, step: &MrtStep, rank_e: f64, residual: f64, iterations: usize, accepted: bool) -> IterationRecord {
    IterationRecord {
        iteration,
        power_watts: step.split.power,
        power_dbm: watts_to_dbm(step.split.power),
        rank_w: 0.0,
        rank_e,
        solver_residual: residual,
        solver_iterations: iterations,
        accepted,
    }
}

fn mrt_design(
    step: MrtStep,
    e_relaxed: Hermitian,
    trace: Vec<f64>,
    status: AoStatus,
    log: Vec<IterationRecord>,
) -> Result<DesignSolution, AoError> {
    Ok(DesignSolution {
        w_vec: &step.dir.w_dir * C64::from(step.split.p_w.sqrt()),
        rank_metrics: RankMetrics { w: step.split.w_mat.rank_one_ratio()?, e: e_relaxed.rank_one_ratio()? },
        w_mat: step.split.w_mat,
        z_mat: step.split.z_mat,
        phi: step.phi,
        e_mat: e_relaxed,
        objective_trace: trace,
        status,
        log,
    })
}

fn run_mrt<R: Rng + ?Sized>(
    norm: &Normalized,
    params: &DesignParams,
    optimize_phases: bool,
    rng: &mut R,
) -> Result<DesignSolution, AoError> {
    let Some(mut current) = mrt_initial(norm, params, rng)? else {
        return Ok(DesignSolution::infeasible(norm.n_t(), norm.m()));
    };
    let mut e_relaxed = phase_matrix(&current.phi);
    let mut trace = vec![current.split.power];
    let mut log = vec![mrt_record(1, &current, 0.0, current.residual, current.iterations, true)];
    if !optimize_phases {
        return mrt_design(current, e_relaxed, trace, AoStatus::Converged, log);
    }
    let mut status = AoStatus::MaxIters;
    while trace.len() < params.n_max {
        if params.solver.deadline.is_some_and(|d| std::time::Instant::now() >= d) {
            break;
        }
        let Some(phase) = solve_phase(norm, &current.split.w_mat, &current.split.z_mat, &current.phi, params)? else {
            status = AoStatus::Converged;
            break;
        };
        let rank_e = phase.sol.e_mat.rank_one_ratio()?;
        let next = match solve_split(norm, &phase.phi, params) {
            Ok(Some(next)) => next,
            Ok(None) | Err(AoError::Build(BuildError::DegenerateProjector)) => {
                status = AoStatus::Converged;
                break;
            }
            Err(e) => return Err(e),
        };
        let prev = current.split.power;
        let accepted = next.split.power <= prev * (1.0 + MONOTONE_SLACK);
        log.push(mrt_record(
            trace.len() + 1,
            &next,
            rank_e,
            next.residual.max(phase.residual),
            next.iterations + phase.iterations,
            accepted,
        ));
        if !accepted {
            status = AoStatus::Converged;
            break;
        }
        current = next;
        e_relaxed = phase.sol.e_mat;
        trace.push(current.split.power);
        if (prev - current.split.power).abs() / prev < params.eps_conv {
            status = AoStatus::Converged;
            break;
        }
    }
    mrt_design(current, e_relaxed, trace, status, log)
}

/// Runs one scheme. Schemes of the same [`SchemeKind::family`] given
/// identically seeded generators start from the same random phases.
pub fn run_scheme<R: Rng + ?Sized>(
    kind: SchemeKind,
    ch: &ChannelSet,
    params: &DesignParams,
    rng: &mut R,
) -> Result<DesignSolution, AoError> {
    let norm = Normalized::new(ch, params.bti_form)?;
    match kind {
        SchemeKind::Proposed | SchemeKind::RandomIrs => {
            let Some(init) = initial_point(&norm, params, rng)? else {
                return Ok(DesignSolution::infeasible(ch.n_t(), ch.m()));
            };
            if kind == SchemeKind::Proposed {
                run_ao_from(&norm, params, init, rng)
            } else {
                let e = phase_matrix(&init.phi);
                let log = vec![IterationRecord {
                    iteration: 1,
                    power_watts: init.sol.power,
                    power_dbm: watts_to_dbm(init.sol.power),
                    rank_w: init.sol.w_mat.rank_one_ratio()?,
                    rank_e: 0.0,
                    solver_residual: init.residual,
                    solver_iterations: init.iterations,
                    accepted: true,
                }];
                finalize(&norm, params, &init, e, vec![init.sol.power], AoStatus::Converged, log, rng)
            }
        }
        SchemeKind::OptimizedMrt => run_mrt(&norm, params, true, rng),
        SchemeKind::RandomMrt => run_mrt(&norm, params, false, rng),
    }
}
