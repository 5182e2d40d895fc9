//! Ground-truth evaluation of designs: rates at the nominal channels,
//! Monte-Carlo outage under the cascaded-channel error model, and a
//! sampling oracle for the Bernstein-type safe approximation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ao::DesignSolution;
use crate::channel::{complex_gaussian, effective_channel, ChannelSet};
use crate::linalg::{as_scaled_identity, eigh, psd_sqrt, unvec, CMatrix, CVector, Hermitian, LinalgError};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// Trials per random substream; fixes the partition independently of the
/// number of workers.
pub const TRIALS_PER_BLOCK: usize = 1000;

fn sinr(h: &CVector, w: &CMatrix, z: &CMatrix, noise_var: f64) -> f64 {
    let quad = |a: &CMatrix| (h.adjoint() * a * h)[(0, 0)].re.max(0.0);
    quad(w) / (noise_var + quad(z))
}

/// `log2(1 + SINR)` at Bob, with effective channel `(phi^T G_cb)^H`.
pub fn rate_bob(w_mat: &Hermitian, z_mat: &Hermitian, phi: &CVector, g_cb: &CMatrix, noise_var: f64) -> f64 {
    let h = effective_channel(g_cb, phi);
    (1.0 + sinr(&h, w_mat.matrix(), z_mat.matrix(), noise_var)).log2()
}

/// `log2(1 + SINR)` at an Eve seeing cascaded channel `g_ce`.
pub fn rate_eve(w_mat: &Hermitian, z_mat: &Hermitian, phi: &CVector, g_ce: &CMatrix, noise_var: f64) -> f64 {
    rate_bob(w_mat, z_mat, phi, g_ce, noise_var)
}

/// `min_k (C_b - C_e,k)` at the nominal channels, for the transmitted
/// beam `w w^H`. With no Eves this is Bob's rate.
pub fn secrecy_rate(design: &DesignSolution, ch: &ChannelSet) -> f64 {
    let w = design.beam_covariance();
    let c_b = rate_bob(&w, &design.z_mat, &design.phi, &ch.g_cb, ch.noise_var_bob);
    ch.g_ce_bar
        .iter()
        .map(|g| c_b - rate_eve(&w, &design.z_mat, &design.phi, g, ch.noise_var_eve))
        .reduce(f64::min)
        .unwrap_or(c_b)
}

/// Half-width of the 95% Wilson score interval for `successes / n`.
pub fn wilson_halfwidth(successes: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.5;
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    Z95 / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutageReport {
    /// Fraction of trials with `C_e,k > log2(beta)`, per Eve.
    pub per_eve_outage: Vec<f64>,
    pub n_trials: usize,
    pub bob_rate: f64,
    pub secrecy_rate_nominal: f64,
    pub wilson_halfwidth: Vec<f64>,
}

impl OutageReport {
    /// Whether every Eve's empirical outage is within `rho` plus its
    /// Wilson half-width.
    pub fn complies(&self, rho: f64) -> bool {
        self.per_eve_outage.iter().zip(&self.wilson_halfwidth).all(|(p, h)| *p <= rho + h)
    }
}

/// How to draw `vec(dG) ~ CN(0, Sigma)`.
enum ErrorSampler {
    Zero,
    Scaled(f64),
    General(CMatrix),
}

impl ErrorSampler {
    fn new(sigma: &Hermitian) -> Result<Self, LinalgError> {
        Ok(match as_scaled_identity(sigma, 1e-12) {
            Some(s) if s <= 0.0 => ErrorSampler::Zero,
            Some(s) => ErrorSampler::Scaled(s.sqrt()),
            None => ErrorSampler::General(psd_sqrt(sigma)?.into_matrix()),
        })
    }

    fn draw<R: Rng + ?Sized>(&self, m: usize, n_t: usize, rng: &mut R) -> Option<CMatrix> {
        match self {
            ErrorSampler::Zero => None,
            ErrorSampler::Scaled(eps) => Some(CMatrix::from_fn(m, n_t, |_, _| complex_gaussian(rng) * *eps)),
            ErrorSampler::General(sqrt) => {
                let v = CVector::from_fn(m * n_t, |_, _| complex_gaussian(rng));
                Some(unvec(&(sqrt * v), m, n_t).expect("size matches"))
            }
        }
    }
}

/// Empirical secrecy outage of a design. Trials are split into blocks of
/// [`TRIALS_PER_BLOCK`], each driven by its own ChaCha stream derived from
/// one draw of `rng`, so the report depends only on `rng` and `n_trials`
/// and not on `jobs`.
pub fn monte_carlo_outage<R: Rng + ?Sized>(
    design: &DesignSolution,
    ch: &ChannelSet,
    beta: f64,
    n_trials: usize,
    jobs: usize,
    rng: &mut R,
) -> Result<OutageReport, LinalgError> {
    let base: u64 = rng.random();
    let (m, n_t) = (ch.m(), ch.n_t());
    let w = design.beam_covariance();
    let z = &design.z_mat;
    let phi = &design.phi;
    let samplers = ch.sigma_e.iter().map(ErrorSampler::new).collect::<Result<Vec<_>, _>>()?;
    let blocks = n_trials.div_ceil(TRIALS_PER_BLOCK);

    let run_block = |b: usize| -> Vec<usize> {
        let mut r = ChaCha8Rng::seed_from_u64(base);
        r.set_stream(b as u64);
        let trials = TRIALS_PER_BLOCK.min(n_trials - b * TRIALS_PER_BLOCK);
        let mut counts = vec![0usize; ch.k_eves()];
        for _ in 0..trials {
            for (k, (g_bar, sampler)) in ch.g_ce_bar.iter().zip(&samplers).enumerate() {
                let g = match sampler.draw(m, n_t, &mut r) {
                    Some(dg) => g_bar + dg,
                    None => g_bar.clone(),
                };
                let h = effective_channel(&g, phi);
                if sinr(&h, w.matrix(), z.matrix(), ch.noise_var_eve) > beta - 1.0 {
                    counts[k] += 1;
                }
            }
        }
        counts
    };

    let jobs = jobs.clamp(1, blocks.max(1));
    let per_block: Vec<Vec<usize>> = if jobs == 1 {
        (0..blocks).map(run_block).collect()
    } else {
        let mut out = vec![Vec::new(); blocks];
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..jobs)
                .map(|j| {
                    let run_block = &run_block;
                    s.spawn(move || (j..blocks).step_by(jobs).map(|b| (b, run_block(b))).collect::<Vec<_>>())
                })
                .collect();
            for h in handles {
                for (b, c) in h.join().expect("worker panicked") {
                    out[b] = c;
                }
            }
        });
        out
    };

    let mut totals = vec![0usize; ch.k_eves()];
    for counts in &per_block {
        for (t, c) in totals.iter_mut().zip(counts) {
            *t += c;
        }
    }
    let n = n_trials.max(1);
    Ok(OutageReport {
        per_eve_outage: totals.iter().map(|&c| c as f64 / n as f64).collect(),
        n_trials,
        bob_rate: rate_bob(&w, z, phi, &ch.g_cb, ch.noise_var_bob),
        secrecy_rate_nominal: secrecy_rate(design, ch),
        wilson_halfwidth: totals.iter().map(|&c| wilson_halfwidth(c, n)).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BtiOracle {
    /// Whether the deterministic system holds at the tight `x`, `y`.
    pub bti_feasible: bool,
    /// Left-hand side of the deterministic system at the tight `x`, `y`.
    pub bti_value: f64,
    /// Sampled `Pr{ v^H A v + 2 Re(u^H v) + c >= 0 }`.
    pub empirical_prob: f64,
}

/// Checks `Tr(A) - sqrt(-2 ln rho) x + ln(rho) y + c >= 0` at
/// `x = ||[vec(A); sqrt(2) u]||`, `y = max(0, -lambda_min(A))`, and
/// separately samples the probability it is meant to bound.
pub fn bti_oracle<R: Rng + ?Sized>(
    a_mat: &Hermitian,
    u: &CVector,
    c: f64,
    rho: f64,
    n_trials: usize,
    rng: &mut R,
) -> Result<BtiOracle, LinalgError> {
    let n = a_mat.dim();
    if u.len() != n {
        return Err(LinalgError::DimMismatch(format!("u has {} entries, A is {n}x{n}", u.len())));
    }
    let a = a_mat.matrix();
    let x = (a.norm_squared() + 2.0 * u.norm_squared()).sqrt();
    let y = (-a_mat.min_eigenvalue()?).max(0.0);
    let value = a_mat.trace() - (-2.0 * rho.ln()).sqrt() * x + rho.ln() * y + c;
    let mut hits = 0usize;
    for _ in 0..n_trials {
        let v = CVector::from_fn(n, |_, _| complex_gaussian(rng));
        let q = (v.adjoint() * a * &v)[(0, 0)].re + 2.0 * u.dotc(&v).re + c;
        if q >= 0.0 {
            hits += 1;
        }
    }
    Ok(BtiOracle {
        bti_feasible: value >= 0.0,
        bti_value: value,
        empirical_prob: if n_trials == 0 { f64::NAN } else { hits as f64 / n_trials as f64 },
    })
}

/// `(det(I + A), 1 + Tr(A))` from the eigenvalues of `A`.
pub fn det_trace_bound(a: &Hermitian) -> Result<(f64, f64), LinalgError> {
    let (vals, _) = eigh(a.matrix())?;
    Ok((vals.iter().map(|l| 1.0 + l).product(), 1.0 + vals.iter().sum::<f64>()))
}

/// Secrecy-relevant rates of a design, at the nominal channels.
pub fn design_rates(design: &DesignSolution, ch: &ChannelSet) -> (f64, Vec<f64>) {
    let w = design.beam_covariance();
    let c_b = rate_bob(&w, &design.z_mat, &design.phi, &ch.g_cb, ch.noise_var_bob);
    let c_e = ch.g_ce_bar.iter().map(|g| rate_eve(&w, &design.z_mat, &design.phi, g, ch.noise_var_eve)).collect();
    (c_b, c_e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::testutil::{random_cmatrix, random_psd, rng};
    use crate::linalg::C64;

    fn unit(n: usize) -> CVector {
        CVector::from_element(n, C64::new(1.0, 0.0))
    }

    #[test]
    fn zero_signal_has_zero_rate() {
        let mut r = rng(1);
        let g = random_cmatrix(&mut r, 3, 2);
        let z = random_psd(&mut r, 2);
        assert_eq!(rate_bob(&Hermitian::zeros(2), &z, &unit(3), &g, 1.0), 0.0);
        assert_eq!(rate_eve(&Hermitian::zeros(2), &z, &unit(3), &g, 1.0), 0.0);
    }

    #[test]
    fn scalar_rate_of_snr_one_is_one_bit() {
        let g = CMatrix::from_element(1, 1, C64::new(0.0, 2.0));
        let w = Hermitian::scaled_identity(1, 0.25 * 3.0);
        let r = rate_bob(&w, &Hermitian::zeros(1), &unit(1), &g, 3.0);
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rate_is_scale_invariant() {
        let mut r = rng(2);
        let g = random_cmatrix(&mut r, 3, 3);
        let (w, z) = (random_psd(&mut r, 3), random_psd(&mut r, 3));
        let phi = crate::ao::random_phases(3, &mut r);
        let a = rate_bob(&w, &z, &phi, &g, 0.7);
        let b = rate_bob(&w.scale(2.0), &z.scale(2.0), &phi, &g, 1.4);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn huge_an_silences_eve_monotonically() {
        let mut r = rng(3);
        let g = random_cmatrix(&mut r, 2, 3);
        let w = random_psd(&mut r, 3);
        let phi = crate::ao::random_phases(2, &mut r);
        let mut last = f64::INFINITY;
        for t in [0.0, 1.0, 10.0, 1e3, 1e9] {
            let rate = rate_eve(&w, &Hermitian::scaled_identity(3, t), &phi, &g, 1.0);
            assert!(rate <= last);
            last = rate;
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn identical_channels_give_identical_rates() {
        let mut r = rng(4);
        let g = random_cmatrix(&mut r, 2, 2);
        let (w, z) = (random_psd(&mut r, 2), random_psd(&mut r, 2));
        let phi = crate::ao::random_phases(2, &mut r);
        assert_eq!(rate_bob(&w, &z, &phi, &g, 0.5), rate_eve(&w, &z, &phi, &g, 0.5));
    }

    #[test]
    fn wilson_halfwidth_shrinks_with_trials() {
        let a = wilson_halfwidth(50, 1000);
        let b = wilson_halfwidth(500, 10000);
        assert!(b < a && a > 0.0);
        // zero successes still leave a positive width
        assert!(wilson_halfwidth(0, 10000) > 0.0);
    }

    #[test]
    fn constant_positive_quadratic_is_certain() {
        let mut r = rng(5);
        let o = bti_oracle(&Hermitian::zeros(1), &CVector::zeros(1), 1.0, 0.05, 1000, &mut r).unwrap();
        assert!(o.bti_feasible);
        assert_eq!(o.empirical_prob, 1.0);
    }

    #[test]
    fn scalar_threshold_matches_closed_form() {
        // A = -1: the system needs c >= 1 + sqrt(2 ln 20) + ln 20
        let c_min = 1.0 + (2.0 * 20f64.ln()).sqrt() + 20f64.ln();
        assert!((c_min - 6.4435).abs() < 1e-3);
        let mut r = rng(6);
        let a = Hermitian::scaled_identity(1, -1.0);
        let at = bti_oracle(&a, &CVector::zeros(1), c_min + 1e-9, 0.05, 0, &mut r).unwrap();
        let below = bti_oracle(&a, &CVector::zeros(1), c_min - 1e-6, 0.05, 0, &mut r).unwrap();
        assert!(at.bti_feasible && !below.bti_feasible);
    }

    #[test]
    fn det_bound_on_rank_one() {
        let mut r = rng(7);
        let x = CVector::from_fn(4, |_, _| complex_gaussian(&mut r));
        let (det, bound) = det_trace_bound(&Hermitian::outer(&x)).unwrap();
        assert!((det - bound).abs() <= 1e-9 * bound);
    }
}
