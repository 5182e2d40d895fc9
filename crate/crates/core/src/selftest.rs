//! Quick built-in checks run by `irs-outage selftest`: a few conic
//! programs with known optima, the determinant/trace inequality, and the
//! Monte-Carlo check of the Bernstein-type bound.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::complex_gaussian;
use crate::conic::{solve, svec, Cone, ConicProgram, DenseMatrix, SolveStatus, SolverSettings, VarBlock};
use crate::linalg::{CMatrix, CVector, Hermitian, RMatrix};
use crate::validator::{bti_oracle, det_trace_bound};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn program(c: Vec<f64>, rows: Vec<Vec<f64>>, b: Vec<f64>, cones: Vec<Cone>) -> ConicProgram {
    let n = c.len();
    ConicProgram {
        num_vars: n,
        c,
        c_offset: 0.0,
        a: DenseMatrix::from_rows(&rows),
        cone_labels: cones.iter().map(|c| format!("{c:?}")).collect(),
        b,
        cones,
        var_names: vec![VarBlock { name: "x".into(), offset: 0, len: n }],
    }
}

enum Expect {
    Optimum(f64),
    Status(SolveStatus),
}

fn solver_cases() -> Vec<(&'static str, ConicProgram, Expect)> {
    // min t s.t. t I - A >= 0 for A = [[2, 1], [1, 2]]: lambda_max = 3
    let a = RMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
    let neg_a: Vec<f64> = svec(&a).iter().map(|v| -v).collect();
    let eye: Vec<f64> = svec(&RMatrix::identity(2, 2)).iter().map(|v| -v).collect();
    let sdp_rows: Vec<Vec<f64>> = eye.iter().map(|v| vec![*v]).collect();
    vec![
        (
            "lp: min x + y, x + 2y >= 2, 2x + y >= 2",
            program(
                vec![1.0, 1.0],
                vec![vec![-1.0, -2.0], vec![-2.0, -1.0], vec![-1.0, 0.0], vec![0.0, -1.0]],
                vec![-2.0, -2.0, 0.0, 0.0],
                vec![Cone::NonNeg(4)],
            ),
            Expect::Optimum(4.0 / 3.0),
        ),
        (
            "soc: min t, ||(x, y)|| <= t, x + y = 2",
            program(
                vec![1.0, 0.0, 0.0],
                vec![vec![0.0, 1.0, 1.0], vec![-1.0, 0.0, 0.0], vec![0.0, -1.0, 0.0], vec![0.0, 0.0, -1.0]],
                vec![2.0, 0.0, 0.0, 0.0],
                vec![Cone::Zero(1), Cone::Soc(3)],
            ),
            Expect::Optimum(std::f64::consts::SQRT_2),
        ),
        ("sdp: largest eigenvalue of [[2, 1], [1, 2]]", program(vec![1.0], sdp_rows, neg_a, vec![Cone::Psd(2)]), Expect::Optimum(3.0)),
        (
            "lp infeasible: x >= 1, x <= 0",
            program(vec![1.0], vec![vec![-1.0], vec![1.0]], vec![-1.0, 0.0], vec![Cone::NonNeg(2)]),
            Expect::Status(SolveStatus::Infeasible),
        ),
        (
            "lp unbounded: min -x, x >= 0",
            program(vec![-1.0], vec![vec![-1.0]], vec![0.0], vec![Cone::NonNeg(1)]),
            Expect::Status(SolveStatus::Unbounded),
        ),
    ]
}

fn check_solver() -> Vec<CheckResult> {
    let settings = SolverSettings { tol: 1e-9, ..SolverSettings::default() };
    solver_cases()
        .into_iter()
        .map(|(name, p, expect)| {
            let (passed, detail) = match (solve(&p, &settings), expect) {
                (Ok(s), Expect::Optimum(want)) => (
                    s.status == SolveStatus::Optimal && (s.objective - want).abs() <= 1e-5 * (1.0 + want.abs()),
                    format!("{:?}, objective {:.9} (expected {want:.9})", s.status, s.objective),
                ),
                (Ok(s), Expect::Status(want)) => (s.status == want, format!("{:?} (expected {want:?})", s.status)),
                (Err(e), _) => (false, e.to_string()),
            };
            CheckResult { name: name.into(), passed, detail }
        })
        .collect()
}

fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> Hermitian {
    let x = CMatrix::from_fn(n, rank, |_, _| complex_gaussian(rng));
    Hermitian::from_square(&x * x.adjoint())
}

fn check_det_trace(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst_gap = f64::INFINITY;
    let mut worst_rank_one = 0.0f64;
    for i in 0..200 {
        let n = 2 + i % 5;
        let (det, bound) = det_trace_bound(&random_psd(rng, n, 1 + i % n)).unwrap_or((f64::NAN, f64::NAN));
        if i % n == 0 {
            worst_rank_one = worst_rank_one.max((det - bound).abs() / bound);
        } else {
            worst_gap = worst_gap.min(det - bound);
        }
    }
    CheckResult {
        name: "det(I + A) >= 1 + Tr(A) on random PSD A".into(),
        passed: worst_gap > 0.0 && worst_rank_one <= 1e-9,
        detail: format!("smallest gap (rank >= 2) {worst_gap:.3e}, largest rank-one mismatch {worst_rank_one:.3e}"),
    }
}

fn check_bti(rng: &mut ChaCha8Rng) -> Vec<CheckResult> {
    let ln20 = 20f64.ln();
    let c_min = 1.0 + (2.0 * ln20).sqrt() + ln20;
    let a = Hermitian::scaled_identity(1, -1.0);
    let at = bti_oracle(&a, &CVector::zeros(1), c_min, 0.05, 20_000, rng);
    let scalar = match at {
        Ok(o) => CheckResult {
            name: "scalar threshold for A = -1".into(),
            passed: (c_min - 6.4435).abs() < 1e-3 && o.bti_value.abs() < 1e-12 && o.empirical_prob >= 0.95,
            detail: format!("c_min {c_min:.4}, exact quantile {ln20:.4}, sampled coverage {:.4}", o.empirical_prob),
        },
        Err(e) => CheckResult { name: "scalar threshold for A = -1".into(), passed: false, detail: e.to_string() },
    };
    let (mut accepted, mut worst) = (0, 0.0f64);
    let mut ok = true;
    for i in 0..20 {
        let n = 1 + i % 4;
        let h = CMatrix::from_fn(n, n, |_, _| complex_gaussian(rng));
        let a = Hermitian::from_square((&h + h.adjoint()) * crate::linalg::C64::from(0.5));
        let u = CVector::from_fn(n, |_, _| complex_gaussian(rng) * 0.5);
        let Ok(probe) = bti_oracle(&a, &u, 0.0, 0.05, 0, rng) else { continue };
        // shift c so the instance sits just inside the system
        let c = -probe.bti_value + 0.05;
        let Ok(o) = bti_oracle(&a, &u, c, 0.05, 10_000, rng) else { continue };
        accepted += 1;
        let violation = 1.0 - o.empirical_prob;
        let sigma = (0.05 * 0.95 / 10_000f64).sqrt();
        worst = worst.max(violation);
        ok &= violation <= 0.05 + 3.0 * sigma;
    }
    vec![
        scalar,
        CheckResult {
            name: "sampled violation of accepted quadratics".into(),
            passed: ok && accepted == 20,
            detail: format!("{accepted} instances, worst violation {worst:.4}"),
        },
    ]
}

/// Runs every check with a fixed seed.
pub fn run_selftest() -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut out = check_solver();
    out.push(check_det_trace(&mut rng));
    out.extend(check_bti(&mut rng));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for r in run_selftest() {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
