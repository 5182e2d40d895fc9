//! Scenario description and random channel generation.
//!
//! All channels use the cascaded convention `h_b^H = phi^T G_cb` with
//! `G_cb = diag(h_rb^H) G_ar`, where `G_ar` is `M x N_t`.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{vec, CMatrix, CVector, Hermitian, C64};

pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid distance {0} m")]
    InvalidDistance(f64),
    #[error("invalid value for {key}: {msg}")]
    Invalid { key: String, msg: String },
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
}

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), msg: msg.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// `atan(dy / dx)` towards `other`, the elevation angle of the link.
    pub fn angle_to(&self, other: &Position) -> f64 {
        let dx = other.x - self.x;
        let dy = other.y - self.y;
        if dx == 0.0 {
            return std::f64::consts::FRAC_PI_2.copysign(dy);
        }
        (dy / dx).atan()
    }
}

/// Physical and algorithmic parameters of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_t: usize,
    pub m: usize,
    pub k_eves: usize,
    pub alice: Position,
    pub irs: Position,
    pub bob: Position,
    pub eves: Vec<Position>,
    pub carrier_hz: f64,
    pub pathloss_exp_ar: f64,
    pub pathloss_exp_rb: f64,
    pub pathloss_exp_re: f64,
    pub rician_ar: f64,
    pub rician_rb: f64,
    pub rician_re: f64,
    pub noise_dbm_bob: f64,
    pub noise_dbm_eve: f64,
    /// `log2(gamma)` in bit/s/Hz.
    pub rate_bob_bps: f64,
    /// `log2(beta)` in bit/s/Hz.
    pub rate_eve_bps: f64,
    pub rho: f64,
    pub delta_sq: f64,
    pub kappa: f64,
    pub eps_conv: f64,
    pub n_max: usize,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_t: 6,
            m: 6,
            k_eves: 2,
            alice: Position::new(0.0, 10.0),
            irs: Position::new(100.0, 25.0),
            bob: Position::new(180.0, 0.0),
            eves: vec![Position::new(160.0, 0.0), Position::new(170.0, 0.0)],
            carrier_hz: 2.4e9,
            pathloss_exp_ar: 2.0,
            pathloss_exp_rb: 2.0,
            pathloss_exp_re: 2.0,
            rician_ar: 5.0,
            rician_rb: 5.0,
            rician_re: 5.0,
            noise_dbm_bob: -75.0,
            noise_dbm_eve: -75.0,
            rate_bob_bps: 3.0,
            rate_eve_bps: 1.0,
            rho: 0.05,
            delta_sq: 1e-4,
            kappa: 5e-8,
            eps_conv: 1e-3,
            n_max: 50,
            seed: 1,
        }
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_t == 0 {
            return Err(invalid("n_t", "must be at least 1"));
        }
        if self.m == 0 {
            return Err(invalid("m", "must be at least 1"));
        }
        if self.k_eves == 0 {
            return Err(invalid("k_eves", "must be at least 1"));
        }
        if self.eves.len() != self.k_eves {
            return Err(invalid(
                "eves",
                format!("{} positions given for k_eves = {}", self.eves.len(), self.k_eves),
            ));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(invalid("rho", "must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.delta_sq) {
            return Err(invalid("delta_sq", "must lie in [0, 1)"));
        }
        if !(self.rate_bob_bps > 0.0) {
            return Err(invalid("rate_bob_bps", "must be positive"));
        }
        if !(self.rate_eve_bps > 0.0) {
            return Err(invalid("rate_eve_bps", "must be positive"));
        }
        if !(self.kappa > 0.0) {
            return Err(invalid("kappa", "must be positive"));
        }
        if !(self.eps_conv > 0.0) {
            return Err(invalid("eps_conv", "must be positive"));
        }
        if self.n_max == 0 {
            return Err(invalid("n_max", "must be at least 1"));
        }
        if !(self.carrier_hz > 0.0) {
            return Err(invalid("carrier_hz", "must be positive"));
        }
        for (key, v) in [
            ("rician_ar", self.rician_ar),
            ("rician_rb", self.rician_rb),
            ("rician_re", self.rician_re),
        ] {
            if !(v >= 0.0) {
                return Err(invalid(key, "must be non-negative"));
            }
        }
        for (key, v) in [
            ("noise_dbm_bob", self.noise_dbm_bob),
            ("noise_dbm_eve", self.noise_dbm_eve),
            ("pathloss_exp_ar", self.pathloss_exp_ar),
            ("pathloss_exp_rb", self.pathloss_exp_rb),
            ("pathloss_exp_re", self.pathloss_exp_re),
        ] {
            if !v.is_finite() {
                return Err(invalid(key, "must be finite"));
            }
        }
        for (name, p) in [("alice", &self.alice), ("bob", &self.bob)] {
            if p.distance(&self.irs) <= 0.0 {
                return Err(invalid(name, "coincides with the IRS"));
            }
        }
        if self.eves.iter().any(|e| e.distance(&self.irs) <= 0.0) {
            return Err(invalid("eves", "an Eve coincides with the IRS"));
        }
        Ok(())
    }

    pub fn gamma(&self) -> f64 {
        self.rate_bob_bps.exp2()
    }

    pub fn beta(&self) -> f64 {
        self.rate_eve_bps.exp2()
    }

    pub fn noise_var_bob(&self) -> f64 {
        dbm_to_watts(self.noise_dbm_bob)
    }

    pub fn noise_var_eve(&self) -> f64 {
        dbm_to_watts(self.noise_dbm_eve)
    }

    /// Applies `key = value`. Scalars shared by several links (`rician`,
    /// `pathloss_exp`, `noise_dbm`) set all of them.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
            v.trim().parse().map_err(|_| invalid(key, format!("cannot parse '{}'", v.trim())))
        }
        match key {
            "n_t" => self.n_t = num(key, value)?,
            "m" => self.m = num(key, value)?,
            "k_eves" => self.k_eves = num(key, value)?,
            "alice" => self.alice = parse_position(key, value)?,
            "irs" => self.irs = parse_position(key, value)?,
            "bob" => self.bob = parse_position(key, value)?,
            "eves" => {
                self.eves = value
                    .split(';')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse_position(key, s))
                    .collect::<Result<_, _>>()?;
                self.k_eves = self.eves.len();
            }
            "carrier_hz" => self.carrier_hz = num(key, value)?,
            "pathloss_exp" => {
                let v = num(key, value)?;
                self.pathloss_exp_ar = v;
                self.pathloss_exp_rb = v;
                self.pathloss_exp_re = v;
            }
            "pathloss_exp_ar" => self.pathloss_exp_ar = num(key, value)?,
            "pathloss_exp_rb" => self.pathloss_exp_rb = num(key, value)?,
            "pathloss_exp_re" => self.pathloss_exp_re = num(key, value)?,
            "rician" => {
                let v = num(key, value)?;
                self.rician_ar = v;
                self.rician_rb = v;
                self.rician_re = v;
            }
            "rician_ar" => self.rician_ar = num(key, value)?,
            "rician_rb" => self.rician_rb = num(key, value)?,
            "rician_re" => self.rician_re = num(key, value)?,
            "noise_dbm" => {
                let v = num(key, value)?;
                self.noise_dbm_bob = v;
                self.noise_dbm_eve = v;
            }
            "noise_dbm_bob" => self.noise_dbm_bob = num(key, value)?,
            "noise_dbm_eve" => self.noise_dbm_eve = num(key, value)?,
            "rate_bob_bps" => self.rate_bob_bps = num(key, value)?,
            "rate_eve_bps" => self.rate_eve_bps = num(key, value)?,
            "rho" => self.rho = num(key, value)?,
            "delta_sq" => self.delta_sq = num(key, value)?,
            "kappa" => self.kappa = num(key, value)?,
            "eps_conv" => self.eps_conv = num(key, value)?,
            "n_max" => self.n_max = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Key-value rendering accepted by [`ScenarioConfig::set`].
    pub fn to_key_values(&self) -> String {
        let pos = |p: &Position| format!("{}, {}", p.x, p.y);
        let mut s = String::new();
        let _ = writeln!(s, "n_t = {}", self.n_t);
        let _ = writeln!(s, "m = {}", self.m);
        let _ = writeln!(s, "alice = {}", pos(&self.alice));
        let _ = writeln!(s, "irs = {}", pos(&self.irs));
        let _ = writeln!(s, "bob = {}", pos(&self.bob));
        let eves: Vec<String> = self.eves.iter().map(pos).collect();
        let _ = writeln!(s, "eves = {}", eves.join("; "));
        let _ = writeln!(s, "k_eves = {}", self.k_eves);
        let _ = writeln!(s, "carrier_hz = {}", self.carrier_hz);
        let _ = writeln!(s, "pathloss_exp_ar = {}", self.pathloss_exp_ar);
        let _ = writeln!(s, "pathloss_exp_rb = {}", self.pathloss_exp_rb);
        let _ = writeln!(s, "pathloss_exp_re = {}", self.pathloss_exp_re);
        let _ = writeln!(s, "rician_ar = {}", self.rician_ar);
        let _ = writeln!(s, "rician_rb = {}", self.rician_rb);
        let _ = writeln!(s, "rician_re = {}", self.rician_re);
        let _ = writeln!(s, "noise_dbm_bob = {}", self.noise_dbm_bob);
        let _ = writeln!(s, "noise_dbm_eve = {}", self.noise_dbm_eve);
        let _ = writeln!(s, "rate_bob_bps = {}", self.rate_bob_bps);
        let _ = writeln!(s, "rate_eve_bps = {}", self.rate_eve_bps);
        let _ = writeln!(s, "rho = {}", self.rho);
        let _ = writeln!(s, "delta_sq = {}", self.delta_sq);
        let _ = writeln!(s, "kappa = {}", self.kappa);
        let _ = writeln!(s, "eps_conv = {}", self.eps_conv);
        let _ = writeln!(s, "n_max = {}", self.n_max);
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }
}

fn parse_position(key: &str, s: &str) -> Result<Position, ConfigError> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(invalid(key, format!("expected 'x, y', got '{}'", s.trim())));
    }
    let x = parts[0].parse().map_err(|_| invalid(key, format!("bad coordinate '{}'", parts[0])))?;
    let y = parts[1].parse().map_err(|_| invalid(key, format!("bad coordinate '{}'", parts[1])))?;
    Ok(Position::new(x, y))
}

/// ULA response: entry `m` (0-based) is `exp(j 2 pi spacing m sin(angle))`.
pub fn steering_vector(n: usize, spacing_ratio: f64, angle: f64) -> CVector {
    let step = 2.0 * std::f64::consts::PI * spacing_ratio * angle.sin();
    CVector::from_iterator(n, (0..n).map(|m| C64::from_polar(1.0, step * m as f64)))
}

/// Free-space reference loss `(lambda / 4 pi)^2` at the carrier.
pub fn reference_loss(carrier_hz: f64) -> f64 {
    let lambda = SPEED_OF_LIGHT / carrier_hz;
    (lambda / (4.0 * std::f64::consts::PI)).powi(2)
}

/// `L0 * d^-alpha`.
pub fn pathloss(d_m: f64, alpha: f64, carrier_hz: f64) -> Result<f64, ConfigError> {
    if !(d_m > 0.0) {
        return Err(ConfigError::InvalidDistance(d_m));
    }
    Ok(reference_loss(carrier_hz) * d_m.powf(-alpha))
}

/// One draw from `CN(0, 1)`: real and imaginary parts i.i.d. `N(0, 1/2)`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn complex_gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    // fill column by column so the draw order matches the storage order
    let mut m = CMatrix::zeros(rows, cols);
    for z in m.iter_mut() {
        *z = complex_gaussian(rng);
    }
    m
}

/// `sqrt(gain) (sqrt(k/(1+k)) los + sqrt(1/(1+k)) N)` with `N` i.i.d. `CN(0,1)`.
pub fn rician_channel<R: Rng + ?Sized>(
    los: &CMatrix,
    rician_k: f64,
    gain: f64,
    rng: &mut R,
) -> Result<CMatrix, ConfigError> {
    if !(rician_k >= 0.0) {
        return Err(invalid("rician", "factor must be non-negative"));
    }
    if !(gain > 0.0) {
        return Err(invalid("gain", "must be positive"));
    }
    let nlos = complex_gaussian_matrix(rng, los.nrows(), los.ncols());
    Ok(rician_mix(los, rician_k, gain, nlos))
}

fn rician_mix(los: &CMatrix, rician_k: f64, gain: f64, nlos: CMatrix) -> CMatrix {
    let a = (rician_k / (1.0 + rician_k)).sqrt();
    let b = (1.0 / (1.0 + rician_k)).sqrt();
    (los * C64::from(a) + nlos * C64::from(b)) * C64::from(gain.sqrt())
}

/// Realized channels of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// Alice to IRS, `M x N_t`.
    pub g_ar: CMatrix,
    /// IRS to Bob, `M x 1`.
    pub h_rb: CVector,
    /// IRS to each Eve, `M x 1`.
    pub h_re: Vec<CVector>,
    /// `diag(h_rb^H) G_ar`.
    pub g_cb: CMatrix,
    /// Mean cascaded Eve channels `diag(h_re^H) G_ar`.
    pub g_ce_bar: Vec<CMatrix>,
    /// Covariance of `vec(dG_ce,k)`, `M N_t x M N_t`.
    pub sigma_e: Vec<Hermitian>,
    pub noise_var_bob: f64,
    pub noise_var_eve: f64,
}

impl ChannelSet {
    pub fn n_t(&self) -> usize {
        self.g_ar.ncols()
    }

    pub fn m(&self) -> usize {
        self.g_ar.nrows()
    }

    pub fn k_eves(&self) -> usize {
        self.g_ce_bar.len()
    }

    /// Effective Bob channel `h_b = (phi^T G_cb)^H` as a column vector.
    pub fn h_bob(&self, phi: &CVector) -> CVector {
        effective_channel(&self.g_cb, phi)
    }

    /// Keeps only the first `k` Eves.
    pub fn truncate_eves(&mut self, k: usize) {
        self.h_re.truncate(k);
        self.g_ce_bar.truncate(k);
        self.sigma_e.truncate(k);
    }
}

/// `(phi^T G)^H`.
pub fn effective_channel(g: &CMatrix, phi: &CVector) -> CVector {
    (phi.transpose() * g).adjoint()
}

/// `diag(h^H) G`.
pub fn cascade(h: &CVector, g: &CMatrix) -> CMatrix {
    let mut out = g.clone();
    for (i, hi) in h.iter().enumerate() {
        let c = hi.conj();
        out.row_mut(i).iter_mut().for_each(|z| *z *= c);
    }
    out
}

/// `delta_sq * ||vec(G)||^2`, the per-entry error variance.
pub fn error_variance(g_bar: &CMatrix, delta_sq: f64) -> f64 {
    delta_sq * vec(g_bar).norm_squared()
}

/// Stream of the scattered part of IRS row `i` of `G_ar`.
const ROW_STREAM_BASE: u64 = 1 << 32;

/// Draws all channels of `cfg`.
///
/// One `u64` is taken from `rng`; every link then uses its own ChaCha
/// stream (`h_rb`: 0, `h_re,k`: `1 + k`, row `i` of `G_ar`:
/// `2^32 + i`). The scattered components for a smaller `N_t` or `M` are
/// therefore the leading block of those for a larger one, so sweeps over
/// the array sizes compare the same realization.
pub fn build_scenario<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<ChannelSet, ConfigError> {
    cfg.validate()?;
    for (key, k) in [("rician_ar", cfg.rician_ar), ("rician_rb", cfg.rician_rb), ("rician_re", cfg.rician_re)] {
        if !(k >= 0.0) {
            return Err(invalid(key, "factor must be non-negative"));
        }
    }
    let base: u64 = rng.random();
    let stream = |s: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(base);
        r.set_stream(s);
        r
    };
    let (n_t, m) = (cfg.n_t, cfg.m);
    let theta_a = cfg.alice.angle_to(&cfg.irs);
    let theta_r = std::f64::consts::PI - theta_a;
    let c = steering_vector(n_t, 0.5, theta_a);
    let d = steering_vector(m, 0.5, theta_r);
    // G_ar^T = ... c d^H, so the LoS part of G_ar is conj(d) c^T
    let los_ar = d.map(|z| z.conj()) * c.transpose();
    let gain_ar = pathloss(cfg.alice.distance(&cfg.irs), cfg.pathloss_exp_ar, cfg.carrier_hz)?;
    let mut nlos_ar = CMatrix::zeros(m, n_t);
    for i in 0..m {
        let mut r = stream(ROW_STREAM_BASE + i as u64);
        for j in 0..n_t {
            nlos_ar[(i, j)] = complex_gaussian(&mut r);
        }
    }
    let g_ar = rician_mix(&los_ar, cfg.rician_ar, gain_ar, nlos_ar);

    let link = |rx: &Position, alpha: f64, k: f64, s: u64| -> Result<CVector, ConfigError> {
        let los = steering_vector(m, 0.5, cfg.irs.angle_to(rx));
        let los = CMatrix::from_column_slice(m, 1, los.as_slice());
        let gain = pathloss(cfg.irs.distance(rx), alpha, cfg.carrier_hz)?;
        let h = rician_channel(&los, k, gain, &mut stream(s))?;
        Ok(CVector::from_column_slice(h.as_slice()))
    };
    let h_rb = link(&cfg.bob, cfg.pathloss_exp_rb, cfg.rician_rb, 0)?;
    let h_re = cfg
        .eves
        .iter()
        .enumerate()
        .map(|(k, e)| link(e, cfg.pathloss_exp_re, cfg.rician_re, 1 + k as u64))
        .collect::<Result<Vec<_>, _>>()?;

    let g_cb = cascade(&h_rb, &g_ar);
    let g_ce_bar: Vec<CMatrix> = h_re.iter().map(|h| cascade(h, &g_ar)).collect();
    let sigma_e = g_ce_bar
        .iter()
        .map(|g| Hermitian::scaled_identity(m * n_t, error_variance(g, cfg.delta_sq)))
        .collect();
    Ok(ChannelSet {
        g_ar,
        h_rb,
        h_re,
        g_cb,
        g_ce_bar,
        sigma_e,
        noise_var_bob: cfg.noise_var_bob(),
        noise_var_eve: cfg.noise_var_eve(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::testutil::rng;

    #[test]
    fn steering_examples() {
        let v = steering_vector(4, 0.5, 0.0);
        assert!(v.iter().all(|z| (z - C64::new(1.0, 0.0)).norm() < 1e-15));
        let v = steering_vector(4, 0.5, std::f64::consts::FRAC_PI_2);
        for (z, want) in v.iter().zip([1.0, -1.0, 1.0, -1.0]) {
            assert!((z - C64::new(want, 0.0)).norm() < 1e-12);
        }
        let v = steering_vector(1, 0.5, 0.7);
        assert_eq!(v.len(), 1);
        assert!((v[0] - C64::new(1.0, 0.0)).norm() < 1e-15);
        let v = steering_vector(7, 0.5, 0.3);
        assert!(v.iter().all(|z| (z.norm() - 1.0).abs() < 1e-14));
    }

    #[test]
    fn pathloss_examples() {
        let lambda = SPEED_OF_LIGHT / 2.4e9;
        assert!((lambda - 0.124914).abs() < 1e-6);
        let l0 = reference_loss(2.4e9);
        assert!((l0 - 9.881e-5).abs() < 1e-8);
        // carrier chosen so that lambda = 4 pi, hence L0 = 1
        let f = SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI);
        assert!((pathloss(1.0, 2.0, f).unwrap() - 1.0).abs() < 1e-12);
        assert!((pathloss(100.0, 2.0, 2.4e9).unwrap() - l0 * 1e-4).abs() < 1e-20);
        assert!((pathloss(100.0, 2.0, 2.4e9).unwrap() - 9.881e-9).abs() < 1e-12);
        assert_eq!(pathloss(0.0, 2.0, 2.4e9), Err(ConfigError::InvalidDistance(0.0)));
        assert!(pathloss(-1.0, 2.0, 2.4e9).is_err());
    }

    #[test]
    fn rician_limits() {
        let mut r = rng(3);
        let los = steering_vector(3, 0.5, 0.4);
        let los = CMatrix::from_column_slice(3, 1, los.as_slice());
        let h = rician_channel(&los, 1e12, 4.0, &mut r).unwrap();
        assert!((&h - &los * C64::from(2.0)).norm() <= 1e-5 * 2.0 * los.norm());

        let zero = CMatrix::zeros(1, 1);
        assert!(rician_channel(&zero, 0.0, 0.0, &mut r).is_err());
        let n = 10_000;
        let mut power = 0.0;
        for _ in 0..n {
            power += rician_channel(&zero, 0.0, 2.5, &mut r).unwrap()[(0, 0)].norm_sqr();
        }
        power /= n as f64;
        assert!((power - 2.5).abs() < 0.05 * 2.5, "power {power}");
        let mut power = 0.0;
        for _ in 0..n {
            power += rician_channel(&zero, 0.0, 1.0, &mut r).unwrap()[(0, 0)].norm_sqr();
        }
        assert!((power / n as f64 - 1.0).abs() < 0.05);
    }

    #[test]
    fn noise_conversion() {
        let cfg = ScenarioConfig::default();
        assert!((cfg.noise_var_bob() - 3.162e-11).abs() < 1e-14);
        assert!((watts_to_dbm(dbm_to_watts(-75.0)) + 75.0).abs() < 1e-12);
        assert_eq!(cfg.gamma(), 8.0);
        assert_eq!(cfg.beta(), 2.0);
    }

    #[test]
    fn zero_error_variance() {
        let cfg = ScenarioConfig { delta_sq: 0.0, ..ScenarioConfig::default() };
        let ch = build_scenario(&cfg, &mut rng(1)).unwrap();
        assert!(ch.sigma_e.iter().all(|s| s.norm_fro() == 0.0));
    }

    #[test]
    fn los_limit_composition() {
        let cfg = ScenarioConfig {
            n_t: 2,
            m: 2,
            rician_ar: 1e12,
            rician_rb: 1e12,
            rician_re: 1e12,
            ..ScenarioConfig::default()
        };
        let ch = build_scenario(&cfg, &mut rng(9)).unwrap();
        let theta = cfg.alice.angle_to(&cfg.irs);
        let c = steering_vector(2, 0.5, theta);
        let d = steering_vector(2, 0.5, std::f64::consts::PI - theta);
        let gain = pathloss(cfg.alice.distance(&cfg.irs), 2.0, cfg.carrier_hz).unwrap();
        let want_t = (&c * d.adjoint()) * C64::from(gain.sqrt());
        assert!((ch.g_ar.transpose() - &want_t).norm() <= 1e-5 * want_t.norm());
    }

    #[test]
    fn cascaded_consistency() {
        let cfg = ScenarioConfig { n_t: 3, m: 4, ..ScenarioConfig::default() };
        let mut r = rng(5);
        let ch = build_scenario(&cfg, &mut r).unwrap();
        let phi = crate::linalg::unit_modulus(&[0.3, -1.2, 2.0, 0.9]);
        let lhs = phi.transpose() * &ch.g_cb;
        let rhs = ch.h_rb.adjoint() * crate::linalg::diag(&phi) * &ch.g_ar;
        assert!((&lhs - &rhs).norm() <= 1e-10 * rhs.norm());
        for (h, g) in ch.h_re.iter().zip(&ch.g_ce_bar) {
            let lhs = phi.transpose() * g;
            let rhs = h.adjoint() * crate::linalg::diag(&phi) * &ch.g_ar;
            assert!((&lhs - &rhs).norm() <= 1e-10 * rhs.norm());
        }
    }

    #[test]
    fn smaller_arrays_are_leading_blocks() {
        let small = ScenarioConfig { n_t: 2, m: 3, ..ScenarioConfig::default() };
        let large = ScenarioConfig { n_t: 5, m: 6, ..ScenarioConfig::default() };
        let a = build_scenario(&small, &mut rng(4)).unwrap();
        let b = build_scenario(&large, &mut rng(4)).unwrap();
        assert!((b.g_ar.view((0, 0), (3, 2)) - &a.g_ar).norm() <= 1e-12 * a.g_ar.norm());
        assert!((b.h_rb.rows(0, 3) - &a.h_rb).norm() <= 1e-12 * a.h_rb.norm());
        for k in 0..2 {
            assert!((b.h_re[k].rows(0, 3) - &a.h_re[k]).norm() <= 1e-12 * a.h_re[k].norm());
        }
    }

    #[test]
    fn error_covariance_is_scaled_identity() {
        let base = ScenarioConfig { n_t: 2, m: 3, ..ScenarioConfig::default() };
        let ch1 = build_scenario(&ScenarioConfig { delta_sq: 1e-4, ..base.clone() }, &mut rng(2)).unwrap();
        let ch2 = build_scenario(&ScenarioConfig { delta_sq: 3e-4, ..base }, &mut rng(2)).unwrap();
        for k in 0..2 {
            let s1 = crate::linalg::as_scaled_identity(&ch1.sigma_e[k], 1e-12).unwrap();
            let s2 = crate::linalg::as_scaled_identity(&ch2.sigma_e[k], 1e-12).unwrap();
            let want = 1e-4 * vec(&ch1.g_ce_bar[k]).norm_squared();
            assert!((s1 - want).abs() <= 1e-15 * want);
            assert!((s2 / s1 - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_channels() {
        let cfg = ScenarioConfig::default();
        let a = build_scenario(&cfg, &mut rng(77)).unwrap();
        let b = build_scenario(&cfg, &mut rng(77)).unwrap();
        assert_eq!(a, b);
        let c = build_scenario(&cfg, &mut rng(78)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn key_value_round_trip() {
        let mut cfg = ScenarioConfig::default();
        cfg.set("eves", "20, 0; 10, 0; 5, 0").unwrap();
        cfg.set("rician", "3").unwrap();
        assert_eq!(cfg.k_eves, 3);
        assert_eq!(cfg.rician_rb, 3.0);
        let mut back = ScenarioConfig::default();
        for line in cfg.to_key_values().lines() {
            let (k, v) = line.split_once('=').unwrap();
            back.set(k.trim(), v).unwrap();
        }
        assert_eq!(back, cfg);
        assert!(matches!(cfg.set("bogus", "1"), Err(ConfigError::UnknownKey(_))));
        assert!(cfg.set("rho", "abc").is_err());
        assert!(cfg.set("bob", "1").is_err());
    }

    #[test]
    fn validation_rejects_bad_values() {
        let ok = ScenarioConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            ScenarioConfig { rho: 0.0, ..ok.clone() },
            ScenarioConfig { delta_sq: 1.0, ..ok.clone() },
            ScenarioConfig { m: 0, ..ok.clone() },
            ScenarioConfig { k_eves: 3, ..ok.clone() },
            ScenarioConfig { kappa: 0.0, ..ok.clone() },
            ScenarioConfig { rate_bob_bps: 0.0, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
