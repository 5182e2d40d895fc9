use irs_outage::builder::{
    bob_rate_row, bti_blocks, bti_row_value, build_phase_subproblem, build_power_split, build_wz_subproblem,
    herm_psd_coords, herm_to_params, phase_matrix, xi_e, BtiForm, BuildError, DesignParams, Free, Normalized,
};
use irs_outage::channel::{build_scenario, ChannelSet, ScenarioConfig};
use irs_outage::conic::{solve, Cone, ConicProgram, SolveStatus, SolverSettings};
use irs_outage::linalg::{CMatrix, CVector, Hermitian, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Channels given directly in cascaded form, with `eps2 I` error
/// covariances.
fn channels(g_cb: CMatrix, g_ce: Vec<CMatrix>, eps2: f64, noise_b: f64, noise_e: f64) -> ChannelSet {
    let (m, n_t) = g_cb.shape();
    let k = g_ce.len();
    ChannelSet {
        g_ar: g_cb.clone(),
        h_rb: CVector::from_element(m, c(1.0)),
        h_re: vec![CVector::from_element(m, c(1.0)); k],
        g_cb,
        g_ce_bar: g_ce,
        sigma_e: vec![Hermitian::scaled_identity(m * n_t, eps2); k],
        noise_var_bob: noise_b,
        noise_var_eve: noise_e,
    }
}

fn params(rate_bob: f64, rate_eve: f64) -> DesignParams {
    let cfg = ScenarioConfig { rate_bob_bps: rate_bob, rate_eve_bps: rate_eve, ..ScenarioConfig::default() };
    let mut p = DesignParams::from_config(&cfg);
    p.solver = SolverSettings { tol: 1e-9, ..SolverSettings::default() };
    p
}

fn rows_of(p: &ConicProgram, label: &str) -> std::ops::Range<usize> {
    let mut start = 0;
    for (cone, l) in p.cones.iter().zip(&p.cone_labels) {
        if l == label {
            return start..start + cone.rows();
        }
        start += cone.rows();
    }
    panic!("no cone labelled {label}");
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_cmatrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| C64::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5))
}

fn random_psd(r: &mut ChaCha8Rng, n: usize) -> Hermitian {
    let x = random_cmatrix(r, n, n);
    Hermitian::from_square(&x * x.adjoint())
}

fn random_phi(r: &mut ChaCha8Rng, m: usize) -> CVector {
    CVector::from_fn(m, |_, _| C64::from_polar(1.0, r.random::<f64>() * std::f64::consts::TAU))
}

#[test]
fn xi_examples() {
    let mut r = rng(1);
    let w = random_psd(&mut r, 3);
    let z = random_psd(&mut r, 3);
    assert_eq!(xi_e(&w, &z, 1.0).unwrap().matrix(), &(-w.matrix()));
    let two = xi_e(&Hermitian::zeros(2), &Hermitian::identity(2), 3.0).unwrap();
    assert!((two.matrix() - CMatrix::identity(2, 2) * c(2.0)).norm() < 1e-15);
    let x = xi_e(&w, &z, 2.0).unwrap();
    assert!(Hermitian::hermitian_residual(x.matrix()) <= 1e-12);
    assert!(matches!(xi_e(&w, &Hermitian::zeros(2), 2.0), Err(BuildError::DimMismatch(_))));
}

#[test]
fn bob_row_examples() {
    // gamma = 1: the threshold vanishes
    let mut r = rng(2);
    let g = random_cmatrix(&mut r, 3, 2);
    let w = random_psd(&mut r, 2);
    let z = random_psd(&mut r, 2);
    let e = phase_matrix(&random_phi(&mut r, 3));
    let direct = (g.adjoint() * e.matrix() * &g * w.matrix()).trace().re;
    assert!((bob_rate_row(&g, w.matrix(), z.matrix(), e.matrix(), 1.0, 5.0) - direct).abs() < 1e-12);
    // scalar reduction: W - (gamma - 1) sigma^2
    let one = CMatrix::identity(1, 1);
    let v = bob_rate_row(&one, &(one.clone() * c(7.0)), &CMatrix::zeros(1, 1), &one, 3.0, 2.0);
    assert!((v - 3.0).abs() < 1e-12);
}

#[test]
fn bob_row_sign_matches_rate_threshold() {
    let mut r = rng(3);
    for _ in 0..50 {
        let g = random_cmatrix(&mut r, 3, 2);
        let (w, z) = (random_psd(&mut r, 2), random_psd(&mut r, 2).scale(0.1));
        let phi = random_phi(&mut r, 3);
        let gamma = 1.0 + 3.0 * r.random::<f64>();
        let noise = 0.2;
        let row = bob_rate_row(&g, w.matrix(), z.matrix(), phase_matrix(&phi).matrix(), gamma, noise);
        // rate from the effective channel h^H = phi^T G
        let h = (phi.transpose() * &g).adjoint();
        let q = |a: &Hermitian| (h.adjoint() * a.matrix() * &h)[(0, 0)].re;
        let rate = (1.0 + q(&w) / (noise + q(&z))).log2();
        assert_eq!(row >= 0.0, 2f64.powf(rate) - gamma >= 0.0);
    }
}

#[test]
fn bti_blocks_without_uncertainty_reduce_to_the_constant() {
    let mut r = rng(4);
    let g = random_cmatrix(&mut r, 2, 2);
    let xi = xi_e(&random_psd(&mut r, 2), &random_psd(&mut r, 2), 2.0).unwrap();
    let e = phase_matrix(&random_phi(&mut r, 2));
    let sigma = irs_outage::builder::SigmaModel::Scaled(0.0);
    let b = bti_blocks(xi.matrix(), e.matrix(), &g, &sigma, 2.0, 0.5, Free::Xi).unwrap();
    assert_eq!(b.trace_term, 0.0);
    assert!(b.soc_stack.iter().all(|v| *v == 0.0));
    assert!(b.lmi_block.is_none());
    assert!((bti_row_value(&b, 0.0, 0.0, 0.05) - b.c_k).abs() < 1e-15);
}

#[test]
fn scalar_wz_program_matches_hand_solution() {
    // W >= Z + 1 (Bob), W <= 3 Z + 0.75 (Eve): optimum Z = 1/8, W = 9/8
    let ch = channels(CMatrix::identity(1, 1), vec![CMatrix::identity(1, 1) * c(2.0)], 0.0, 1.0, 1.0);
    let p = params(1.0, 2.0);
    let prog = build_wz_subproblem(&ch, &Hermitian::identity(1), &p).unwrap();
    let s = solve(&prog.program, &p.solver).unwrap();
    assert_eq!(s.status, SolveStatus::Optimal);
    let d = prog.decode(&s);
    assert!((d.power - 1.25).abs() < 1e-6, "{}", d.power);
    assert!((d.z_mat.trace() - 0.125).abs() < 1e-6);
    assert!((d.w_mat.trace() - 1.125).abs() < 1e-6);
}

#[test]
fn scalar_wz_without_an_need() {
    // Eve is weak enough that Z = 0 is optimal: W = (gamma - 1) sigma^2 / |g|^2
    let ch = channels(CMatrix::identity(1, 1) * c(2.0), vec![CMatrix::identity(1, 1) * c(0.1)], 0.0, 1.0, 1.0);
    let p = params(2.0, 1.0);
    let prog = build_wz_subproblem(&ch, &Hermitian::identity(1), &p).unwrap();
    let s = solve(&prog.program, &p.solver).unwrap();
    let d = prog.decode(&s);
    assert!((d.power - 0.75).abs() < 1e-6);
    assert!(d.z_mat.trace().abs() < 1e-6);
}

#[test]
fn unreachable_rate_is_infeasible() {
    // Bob needs W >= 3 (Z + 1) but Eve allows only W <= Z + 1/4
    let ch = channels(CMatrix::identity(1, 1), vec![CMatrix::identity(1, 1) * c(2.0)], 0.0, 1.0, 1.0);
    let p = params(2.0, 1.0);
    let prog = build_wz_subproblem(&ch, &Hermitian::identity(1), &p).unwrap();
    assert_eq!(solve(&prog.program, &p.solver).unwrap().status, SolveStatus::Infeasible);
    // an enormous rate target behaves the same way
    let p = params(60.0, 1.0);
    let prog = build_wz_subproblem(&ch, &Hermitian::identity(1), &p).unwrap();
    assert_eq!(solve(&prog.program, &p.solver).unwrap().status, SolveStatus::Infeasible);
}

#[test]
fn no_eves_gives_mrt_power() {
    let mut r = rng(5);
    let g = random_cmatrix(&mut r, 3, 2);
    let ch = channels(g.clone(), vec![], 0.0, 0.3, 0.3);
    let phi = random_phi(&mut r, 3);
    let p = params(2.0, 1.0);
    let prog = build_wz_subproblem(&ch, &phase_matrix(&phi), &p).unwrap();
    let s = solve(&prog.program, &p.solver).unwrap();
    let d = prog.decode(&s);
    let h = (phi.transpose() * &g).adjoint();
    let want = 3.0 * 0.3 / h.norm_squared();
    assert!((d.power - want).abs() <= 1e-6 * want, "{} vs {want}", d.power);
    assert!(d.z_mat.trace() <= 1e-6 * want);
}

#[test]
fn full_form_has_kronecker_sized_lmi_and_runs() {
    let cfg = ScenarioConfig::default();
    let ch = build_scenario(&cfg, &mut rng(6)).unwrap();
    let mut p = DesignParams::from_config(&cfg);
    p.bti_form = BtiForm::Full;
    let e = phase_matrix(&random_phi(&mut rng(7), cfg.m));
    let prog = build_wz_subproblem(&ch, &e, &p).unwrap();
    let lmis: Vec<&Cone> =
        prog.program.cones.iter().zip(&prog.program.cone_labels).filter(|(_, l)| l.ends_with("lmi")).map(|(c, _)| c).collect();
    assert_eq!(lmis, vec![&Cone::Psd(72), &Cone::Psd(72)]);
    let s = solve(&prog.program, &p.solver).unwrap();
    assert_eq!(s.status, SolveStatus::Optimal);
}

#[test]
fn full_and_reduced_forms_agree() {
    let cfg = ScenarioConfig { n_t: 3, m: 3, ..ScenarioConfig::default() };
    let ch = build_scenario(&cfg, &mut rng(8)).unwrap();
    let e = phase_matrix(&random_phi(&mut rng(9), 3));
    let mut p = DesignParams::from_config(&cfg);
    p.solver.tol = 1e-9;
    let mut powers = Vec::new();
    for form in [BtiForm::Auto, BtiForm::Full] {
        p.bti_form = form;
        let prog = build_wz_subproblem(&ch, &e, &p).unwrap();
        let s = solve(&prog.program, &p.solver).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        powers.push(prog.decode(&s).power);
    }
    assert!((powers[0] - powers[1]).abs() <= 1e-5 * powers[0], "{powers:?}");
}

/// Variable vector for the WZ program from explicit (normalized) values.
fn wz_point(prog: &ConicProgram, w: &Hermitian, z: &Hermitian, x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; prog.num_vars];
    for (name, vals) in
        [("W", herm_to_params(w.matrix())), ("Z", herm_to_params(z.matrix())), ("x", x.to_vec()), ("y", y.to_vec())]
    {
        let b = prog.block(name).unwrap();
        v[b.offset..b.offset + b.len].copy_from_slice(&vals);
    }
    v
}

#[test]
fn wz_rows_are_the_affine_constraint_values() {
    for form in [BtiForm::Auto, BtiForm::Full] {
        let cfg = ScenarioConfig { n_t: 2, m: 3, ..ScenarioConfig::default() };
        let ch = build_scenario(&cfg, &mut rng(10)).unwrap();
        let mut p = DesignParams::from_config(&cfg);
        p.bti_form = form;
        let norm = Normalized::new(&ch, form).unwrap();
        let mut r = rng(11);
        let e = phase_matrix(&random_phi(&mut r, 3));
        let prog = build_wz_subproblem(&ch, &e, &p).unwrap().program;
        let row = |w: &Hermitian, z: &Hermitian, x: &[f64], y: &[f64]| -> Vec<f64> {
            prog.slack(&wz_point(&prog, w, z, x, y))
        };
        let (w, z) = (random_psd(&mut r, 2), random_psd(&mut r, 2));
        let (x, y) = ([0.3, 1.7], [0.2, 0.9]);
        let s = row(&w, &z, &x, &y);
        // direct evaluation of every block
        let bob = bob_rate_row(&norm.g_cb, w.matrix(), z.matrix(), e.matrix(), p.gamma, 1.0);
        assert!((s[rows_of(&prog, "bob rate")][0] - bob).abs() < 1e-9 * (1.0 + bob.abs()));
        assert_eq!(s[rows_of(&prog, "W psd")].len(), 10);
        let wp = herm_psd_coords(w.matrix());
        for (a, b) in s[rows_of(&prog, "W psd")].iter().zip(&wp) {
            assert!((a - b).abs() < 1e-12);
        }
        let xi = xi_e(&w, &z, p.beta).unwrap();
        for k in 0..2 {
            let b = bti_blocks(xi.matrix(), e.matrix(), &norm.g_ce[k], &norm.sigma[k], p.beta, norm.noise_eve, Free::Xi)
                .unwrap();
            let want = bti_row_value(&b, x[k], y[k], p.rho);
            let got = s[rows_of(&prog, &format!("eve{k} bti"))][0];
            assert!((got - want).abs() <= 1e-9 * (1.0 + want.abs()), "{form:?}: {got} vs {want}");
            let soc = &s[rows_of(&prog, &format!("eve{k} soc"))];
            assert!((soc[0] - x[k]).abs() < 1e-12);
            let norm_got: f64 = soc[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
            let norm_want: f64 = b.soc_stack.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm_got - norm_want).abs() <= 1e-9 * (1.0 + norm_want));
        }
        // second difference along a ray vanishes
        let (w2, z2) = (w.scale(2.0), z.scale(2.0));
        let zero = Hermitian::zeros(2);
        let s2 = row(&w2, &z2, &[0.6, 3.4], &[0.4, 1.8]);
        let s0 = row(&zero, &zero, &[0.0, 0.0], &[0.0, 0.0]);
        for i in 0..s.len() {
            let scale = 1.0 + s2[i].abs() + s[i].abs() + s0[i].abs();
            assert!((s2[i] - 2.0 * s[i] + s0[i]).abs() <= 1e-10 * scale);
        }
    }
}

#[test]
fn phase_program_linearization_and_anchor() {
    let cfg = ScenarioConfig { n_t: 2, m: 3, ..ScenarioConfig::default() };
    let ch = build_scenario(&cfg, &mut rng(12)).unwrap();
    let p = DesignParams::from_config(&cfg);
    let mut r = rng(13);
    let (w, z) = (random_psd(&mut r, 2), random_psd(&mut r, 2));
    let prog = build_phase_subproblem(&ch, &w, &z, &Hermitian::identity(3), &p).unwrap();
    assert!((&prog.linearization - CMatrix::identity(3, 3) * c(0.5)).norm() < 1e-14);

    let anchor = phase_matrix(&random_phi(&mut r, 3));
    let prog = build_phase_subproblem(&ch, &w, &z, &anchor, &p).unwrap();
    assert_eq!(prog.linearized_penalty(&anchor, &anchor), 0.0);
    // objective at E = anchor with zero slacks is zero
    let mut v = vec![0.0; prog.program.num_vars];
    let b = prog.program.block("E").unwrap();
    v[b.offset..b.offset + b.len].copy_from_slice(&herm_to_params(anchor.matrix()));
    assert!(prog.program.objective(&v).abs() < 1e-12);
    // the diagonal rows hold exactly at a phase matrix
    let s = prog.program.slack(&v);
    assert!(s[rows_of(&prog.program, "E diag")].iter().all(|d| d.abs() < 1e-12));
}

#[test]
fn singular_linearization_is_reported() {
    let cfg = ScenarioConfig { n_t: 2, m: 2, ..ScenarioConfig::default() };
    let ch = build_scenario(&cfg, &mut rng(14)).unwrap();
    let p = DesignParams::from_config(&cfg);
    let w = Hermitian::identity(2);
    let bad = Hermitian::scaled_identity(2, -1.0);
    assert!(matches!(
        build_phase_subproblem(&ch, &w, &w, &bad, &p),
        Err(BuildError::SingularLinearization)
    ));
}

#[test]
fn single_element_phase_program_is_feasibility_in_slacks() {
    // with one element every cascaded channel is a multiple of the same row,
    // so use hand-made channels that Bob and Eve do not share
    let g_cb = CMatrix::from_row_slice(1, 2, &[c(1.0), c(0.2)]);
    let g_ce = CMatrix::from_row_slice(1, 2, &[c(0.1), c(0.8)]);
    let ch = channels(g_cb, vec![g_ce], 1e-4, 1.0, 1.0);
    let p = params(2.0, 1.0);
    let phi = CVector::from_element(1, c(1.0));
    let prog = build_wz_subproblem(&ch, &phase_matrix(&phi), &p).unwrap();
    let s = solve(&prog.program, &p.solver).unwrap();
    assert_eq!(s.status, SolveStatus::Optimal);
    let d = prog.decode(&s);
    // Bob's row is tight at the optimum; a little extra beam power keeps
    // the fixed point strictly feasible (Eve has ample margin here)
    let ph = build_phase_subproblem(&ch, &d.w_mat.scale(1.001), &d.z_mat, &phase_matrix(&phi), &p).unwrap();
    let s = solve(&ph.program, &p.solver).unwrap();
    assert_eq!(s.status, SolveStatus::Optimal);
    let e = ph.decode(&s).e_mat;
    assert!((e.matrix()[(0, 0)] - c(1.0)).norm() < 1e-6);
}

#[test]
fn power_split_matches_hand_solution() {
    // h_b = e1, so AN lives on e2. Bob: p_w >= 1. Eve: p_z |g2|^2 - p_w |g1|^2 + 1 >= 0
    // with g = (2, 1): p_z >= 4 p_w - 1 = 3, total 4.
    let g_cb = CMatrix::from_row_slice(1, 2, &[c(1.0), c(0.0)]);
    let g_ce = CMatrix::from_row_slice(1, 2, &[c(2.0), c(1.0)]);
    let ch = channels(g_cb, vec![g_ce], 0.0, 1.0, 1.0);
    let p = params(1.0, 1.0);
    let phi = CVector::from_element(1, c(1.0));
    let w_dir = CVector::from_row_slice(&[c(1.0), c(0.0)]);
    let prog = build_power_split(&ch, &w_dir, &phi, &p).unwrap();
    let s = solve(&prog.program, &p.solver).unwrap();
    assert_eq!(s.status, SolveStatus::Optimal);
    let d = prog.decode(&s);
    assert!((d.p_w - 1.0).abs() < 1e-6 && (d.p_z - 3.0).abs() < 1e-6, "{} {}", d.p_w, d.p_z);
    assert!((d.power - 4.0).abs() < 1e-6);
}

#[test]
fn power_split_infeasible_when_eve_threshold_is_too_low() {
    // Eve sees the beam through g1 = 2 and no AN direction reaches her.
    let g_cb = CMatrix::from_row_slice(1, 2, &[c(1.0), c(0.0)]);
    let g_ce = CMatrix::from_row_slice(1, 2, &[c(2.0), c(0.0)]);
    let ch = channels(g_cb, vec![g_ce], 0.0, 1.0, 1.0);
    let p = params(2.0, 1.0);
    let phi = CVector::from_element(1, c(1.0));
    let w_dir = CVector::from_row_slice(&[c(1.0), c(0.0)]);
    let prog = build_power_split(&ch, &w_dir, &phi, &p).unwrap();
    assert_eq!(solve(&prog.program, &p.solver).unwrap().status, SolveStatus::Infeasible);
}

#[test]
fn single_antenna_power_split_has_no_an() {
    let g_cb = CMatrix::from_row_slice(2, 1, &[c(1.0), c(0.5)]);
    let g_ce = CMatrix::from_row_slice(2, 1, &[c(0.1), c(0.2)]);
    let ch = channels(g_cb.clone(), vec![g_ce], 0.0, 1.0, 1.0);
    let p = params(1.0, 1.0);
    let phi = CVector::from_element(2, c(1.0));
    let h = (phi.transpose() * &g_cb).adjoint();
    let w_dir = &h / c(h.norm());
    let prog = build_power_split(&ch, &w_dir, &phi, &p).unwrap();
    assert_eq!(prog.projector.trace(), 0.0);
    let s = solve(&prog.program, &p.solver).unwrap();
    let d = prog.decode(&s);
    assert_eq!(d.p_z, 0.0);
    assert!((d.p_w - 1.0 / h.norm_squared()).abs() < 1e-6);
}

#[test]
fn debug_dump_lists_blocks() {
    let ch = channels(CMatrix::identity(1, 1), vec![CMatrix::identity(1, 1)], 1e-3, 1.0, 1.0);
    let prog = build_wz_subproblem(&ch, &Hermitian::identity(1), &params(1.0, 1.0)).unwrap();
    let dump = prog.program.debug_dump();
    for label in ["W psd", "Z psd", "bob rate", "eve0 bti", "eve0 soc", "eve0 lmi", "eve0 y"] {
        assert!(dump.contains(label), "{label} missing from\n{dump}");
    }
}
