//! Parameter sweeps: configuration files, per-cell execution and CSV output.
//!
//! A configuration file holds `key = value` lines for the scenario,
//! optionally followed by a `[sweep]` section:
//!
//! ```text
//! n_t = 4
//! m = 4
//! [sweep]
//! axis = m            # m | n_t | rate_bob | rate_eve | delta_sq
//! values = 3, 5, 7
//! seeds = 1..20       # inclusive range or a comma-separated list
//! schemes = proposed, random_irs, optimized_mrt, random_mrt
//! mc_trials = 10000
//! timeout_s = 300
//! out = results.csv
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ao::{AoError, DesignSolution};
use crate::benchmarks::{run_scheme, SchemeKind};
use crate::builder::{BtiForm, DesignParams};
use crate::channel::{build_scenario, watts_to_dbm, ChannelSet, ConfigError, ScenarioConfig};
use crate::linalg::{CMatrix, CVector, Hermitian, C64};
use crate::validator::{monte_carlo_outage, OutageReport};

/// Environment variable naming the directory searched for relative
/// configuration paths that do not exist in the working directory.
pub const CONFIG_DIR_ENV: &str = "IRS_OUTAGE_CONFIG_DIR";

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid design file: {0}")]
    Design(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    M,
    NT,
    RateBob,
    RateEve,
    DeltaSq,
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::M => "m",
            Axis::NT => "n_t",
            Axis::RateBob => "rate_bob",
            Axis::RateEve => "rate_eve",
            Axis::DeltaSq => "delta_sq",
        }
    }

    /// Copy of `base` with this axis set to `value`.
    pub fn apply(&self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig, ConfigError> {
        let mut cfg = base.clone();
        let count = |v: f64| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(ConfigError::Invalid { key: self.name().into(), msg: format!("{v} is not a positive integer") })
            }
        };
        match self {
            Axis::M => cfg.m = count(value)?,
            Axis::NT => cfg.n_t = count(value)?,
            Axis::RateBob => cfg.rate_bob_bps = value,
            Axis::RateEve => cfg.rate_eve_bps = value,
            Axis::DeltaSq => cfg.delta_sq = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl FromStr for Axis {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "m" | "M" => Ok(Axis::M),
            "n_t" | "N_t" => Ok(Axis::NT),
            "rate_bob" | "rate_bob_bps" => Ok(Axis::RateBob),
            "rate_eve" | "rate_eve_bps" => Ok(Axis::RateEve),
            "delta_sq" => Ok(Axis::DeltaSq),
            other => Err(ConfigError::Invalid { key: "axis".into(), msg: format!("unknown axis '{other}'") }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: ScenarioConfig,
    pub axis: Axis,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub schemes: Vec<SchemeKind>,
    pub out_path: Option<PathBuf>,
    pub mc_trials: usize,
    pub timeout: Duration,
    pub bti_form: BtiForm,
}

impl SweepSpec {
    /// A single-cell sweep over `base`'s own values.
    pub fn single(base: ScenarioConfig, schemes: Vec<SchemeKind>) -> Self {
        SweepSpec {
            values: vec![base.m as f64],
            seeds: vec![base.seed],
            axis: Axis::M,
            base,
            schemes,
            out_path: None,
            mc_trials: 10_000,
            timeout: Duration::from_secs(300),
            bti_form: BtiForm::Auto,
        }
    }

    pub fn num_cells(&self) -> usize {
        self.values.len() * self.seeds.len() * self.schemes.len()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, msg: &str| Err(ConfigError::Invalid { key: key.into(), msg: msg.into() });
        if self.values.is_empty() {
            return bad("values", "must not be empty");
        }
        if self.seeds.is_empty() {
            return bad("seeds", "must not be empty");
        }
        if self.schemes.is_empty() {
            return bad("schemes", "must not be empty");
        }
        if self.mc_trials < 1000 {
            return bad("mc_trials", "must be at least 1000");
        }
        for &v in &self.values {
            self.axis.apply(&self.base, v)?;
        }
        Ok(())
    }
}

fn parse_list<T>(key: &str, value: &str, f: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, ConfigError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| f(s).ok_or_else(|| ConfigError::Invalid { key: key.into(), msg: format!("cannot parse '{s}'") }))
        .collect()
}

fn parse_seeds(value: &str) -> Result<Vec<u64>, ConfigError> {
    if let Some((a, b)) = value.split_once("..") {
        let parse = |s: &str| {
            s.trim()
                .trim_start_matches('=')
                .parse::<u64>()
                .map_err(|_| ConfigError::Invalid { key: "seeds".into(), msg: format!("cannot parse range '{value}'") })
        };
        let (a, b) = (parse(a)?, parse(b)?);
        if b < a {
            return Err(ConfigError::Invalid { key: "seeds".into(), msg: "empty range".into() });
        }
        return Ok((a..=b).collect());
    }
    parse_list("seeds", value, |s| s.parse().ok())
}

/// Parses a configuration file's text. Relative `out` paths are kept as
/// written.
pub fn parse_config(text: &str) -> Result<SweepSpec, ConfigError> {
    let mut base = ScenarioConfig::default();
    let mut spec = SweepSpec::single(base.clone(), vec![SchemeKind::Proposed]);
    let (mut axis, mut values, mut seeds) = (None, None, None);
    let mut in_sweep = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            match line {
                "[sweep]" => in_sweep = true,
                "[scenario]" => in_sweep = false,
                _ => return Err(ConfigError::Syntax { line: i + 1, msg: format!("unknown section {line}") }),
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax { line: i + 1, msg: "expected `key = value`".into() });
        };
        let (key, value) = (key.trim(), value.trim());
        if !in_sweep {
            base.set(key, value)?;
            continue;
        }
        let number = |v: &str| {
            v.parse::<f64>().map_err(|_| ConfigError::Invalid { key: key.into(), msg: format!("cannot parse '{v}'") })
        };
        match key {
            "axis" => axis = Some(value.parse::<Axis>()?),
            "values" => values = Some(parse_list(key, value, |s| s.parse::<f64>().ok())?),
            "seeds" => seeds = Some(parse_seeds(value)?),
            "schemes" => spec.schemes = parse_list(key, value, |s| s.parse::<SchemeKind>().ok())?,
            "out" => spec.out_path = Some(PathBuf::from(value)),
            "mc_trials" => spec.mc_trials = number(value)? as usize,
            "timeout_s" => spec.timeout = Duration::from_secs_f64(number(value)?.max(0.0)),
            "bti_form" => {
                spec.bti_form = match value {
                    "auto" => BtiForm::Auto,
                    "full" => BtiForm::Full,
                    _ => return Err(ConfigError::Invalid { key: key.into(), msg: "expected auto or full".into() }),
                }
            }
            _ => return Err(ConfigError::UnknownKey(format!("sweep.{key}"))),
        }
    }
    base.validate()?;
    match (axis, values) {
        (Some(a), Some(v)) => {
            spec.axis = a;
            spec.values = v;
        }
        (None, None) => {
            spec.axis = Axis::M;
            spec.values = vec![base.m as f64];
        }
        _ => return Err(ConfigError::Invalid { key: "axis".into(), msg: "axis and values go together".into() }),
    }
    spec.seeds = seeds.unwrap_or_else(|| vec![base.seed]);
    spec.base = base;
    spec.validate()?;
    Ok(spec)
}

/// Reads a configuration file. A relative path that does not exist is
/// also looked up under `$IRS_OUTAGE_CONFIG_DIR`.
pub fn load_config(path: &Path) -> Result<SweepSpec, SweepError> {
    let resolved = if path.is_relative() && !path.exists() {
        match std::env::var_os(CONFIG_DIR_ENV) {
            Some(dir) => Path::new(&dir).join(path),
            None => path.to_path_buf(),
        }
    } else {
        path.to_path_buf()
    };
    let text = std::fs::read_to_string(&resolved).map_err(|source| SweepError::Io { path: resolved.clone(), source })?;
    Ok(parse_config(&text)?)
}

/// Channel draws for `seed`.
pub fn scenario_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Optimizer randomness for `kind` at `seed`; schemes of one family share
/// a stream and hence their initial phases.
pub fn scheme_rng(seed: u64, kind: SchemeKind) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(1 + kind.family());
    r
}

/// Monte-Carlo randomness for `kind` at `seed`.
pub fn validation_rng(seed: u64, kind: SchemeKind) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let idx = SchemeKind::ALL.iter().position(|k| *k == kind).unwrap_or(0) as u64;
    r.set_stream(16 + idx);
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellStatus {
    Converged,
    MaxIters,
    Infeasible,
    Timeout,
    Error,
}

impl CellStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            CellStatus::Converged => "Converged",
            CellStatus::MaxIters => "MaxIters",
            CellStatus::Infeasible => "Infeasible",
            CellStatus::Timeout => "Timeout",
            CellStatus::Error => "Error",
        }
    }

    /// Whether the cell produced a design.
    pub fn has_design(&self) -> bool {
        matches!(self, CellStatus::Converged | CellStatus::MaxIters | CellStatus::Timeout)
    }
}

/// One `(value, seed, scheme)` outcome.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub axis_value: f64,
    pub seed: u64,
    pub scheme: SchemeKind,
    pub config: ScenarioConfig,
    pub status: CellStatus,
    pub design: Option<DesignSolution>,
    pub outage: Option<OutageReport>,
    pub message: Option<String>,
}

impl CellResult {
    pub fn power_watts(&self) -> f64 {
        self.design.as_ref().filter(|_| self.status.has_design()).map_or(f64::NAN, DesignSolution::power)
    }
}

/// Channels, design parameters and the configured scenario of one cell.
pub fn cell_problem(
    base: &ScenarioConfig,
    axis: Axis,
    value: f64,
    seed: u64,
    bti_form: BtiForm,
) -> Result<(ScenarioConfig, ChannelSet, DesignParams), ConfigError> {
    let mut cfg = axis.apply(base, value)?;
    cfg.seed = seed;
    let ch = build_scenario(&cfg, &mut scenario_rng(seed))?;
    let mut params = DesignParams::from_config(&cfg);
    params.bti_form = bti_form;
    Ok((cfg, ch, params))
}

pub fn run_cell(spec: &SweepSpec, value: f64, seed: u64, scheme: SchemeKind) -> CellResult {
    let mut out = CellResult {
        axis_value: value,
        seed,
        scheme,
        config: spec.base.clone(),
        status: CellStatus::Error,
        design: None,
        outage: None,
        message: None,
    };
    let (cfg, ch, mut params) = match cell_problem(&spec.base, spec.axis, value, seed, spec.bti_form) {
        Ok(p) => p,
        Err(e) => {
            out.message = Some(e.to_string());
            return out;
        }
    };
    out.config = cfg.clone();
    let deadline = Instant::now() + spec.timeout;
    params.solver.deadline = Some(deadline);
    let design = match run_scheme(scheme, &ch, &params, &mut scheme_rng(seed, scheme)) {
        Ok(d) => d,
        Err(AoError::RandomizationFailed) => {
            out.status = CellStatus::Infeasible;
            out.message = Some(AoError::RandomizationFailed.to_string());
            return out;
        }
        Err(e) => {
            out.message = Some(e.to_string());
            return out;
        }
    };
    out.status = match design.status {
        crate::ao::AoStatus::Converged => CellStatus::Converged,
        crate::ao::AoStatus::MaxIters => CellStatus::MaxIters,
        crate::ao::AoStatus::Infeasible => CellStatus::Infeasible,
    };
    if out.status.has_design() && Instant::now() >= deadline {
        out.status = CellStatus::Timeout;
    }
    if out.status.has_design() {
        match monte_carlo_outage(&design, &ch, cfg.beta(), spec.mc_trials, 1, &mut validation_rng(seed, scheme)) {
            Ok(r) => out.outage = Some(r),
            Err(e) => out.message = Some(e.to_string()),
        }
    }
    out.design = Some(design);
    out
}

/// Every cell of `spec` in `(value, seed, scheme)` order, computed on up to
/// `jobs` threads. The result does not depend on `jobs`.
pub fn run_cells(spec: &SweepSpec, jobs: usize, progress: impl Fn(&CellResult) + Sync) -> Vec<CellResult> {
    let cells: Vec<(f64, u64, SchemeKind)> = spec
        .values
        .iter()
        .flat_map(|&v| spec.seeds.iter().flat_map(move |&s| spec.schemes.iter().map(move |&k| (v, s, k))))
        .collect();
    let slots: Vec<Mutex<Option<CellResult>>> = cells.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(&(v, s, k)) = cells.get(i) else { break };
        let r = run_cell(spec, v, s, k);
        progress(&r);
        *slots[i].lock().expect("slot poisoned") = Some(r);
    };
    let jobs = jobs.clamp(1, cells.len().max(1));
    if jobs == 1 {
        worker();
    } else {
        std::thread::scope(|scope| {
            for _ in 0..jobs {
                scope.spawn(worker);
            }
        });
    }
    slots.into_iter().map(|m| m.into_inner().expect("slot poisoned").expect("every cell ran")).collect()
}

fn fmt_f(v: f64, prec: usize) -> String {
    if v.is_finite() {
        format!("{v:.prec$e}")
    } else {
        "nan".into()
    }
}

pub fn csv_header(k_eves: usize) -> String {
    let mut h = String::from("axis_value,seed,scheme,power_watts,power_dbm,an_fraction,iterations");
    for k in 1..=k_eves {
        let _ = write!(h, ",outage_{k}");
    }
    h.push_str(",status");
    h
}

pub fn csv_row(r: &CellResult, k_eves: usize) -> String {
    let p = r.power_watts();
    let (an, iters) = match (&r.design, r.status.has_design()) {
        (Some(d), true) => (fmt_f(d.an_fraction(), 9), d.iterations().to_string()),
        _ => ("nan".into(), "0".into()),
    };
    let mut s = format!(
        "{},{},{},{},{},{},{}",
        fmt_f(r.axis_value, 9),
        r.seed,
        r.scheme,
        fmt_f(p, 12),
        if p > 0.0 { format!("{:.9}", watts_to_dbm(p)) } else { "nan".into() },
        an,
        iters
    );
    for k in 0..k_eves {
        let o = r.outage.as_ref().and_then(|o| o.per_eve_outage.get(k).copied()).unwrap_or(f64::NAN);
        s.push(',');
        s.push_str(&if o.is_finite() { format!("{o:.6}") } else { "nan".into() });
    }
    let _ = write!(s, ",{}", r.status.as_str());
    s
}

pub fn to_csv(rows: &[CellResult], k_eves: usize) -> String {
    let mut s = csv_header(k_eves);
    s.push('\n');
    for r in rows {
        s.push_str(&csv_row(r, k_eves));
        s.push('\n');
    }
    s
}

/// Mean and median over seeds for one `(value, scheme)` pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub axis_value: f64,
    pub scheme: SchemeKind,
    /// Cells that produced a design.
    pub count: usize,
    pub mean_dbm: f64,
    pub median_dbm: f64,
    pub mean_an_fraction: f64,
    pub mean_iterations: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Per `(value, scheme)` statistics of the cells that produced a design.
/// Powers are averaged in dBm.
pub fn summarize(spec: &SweepSpec, rows: &[CellResult]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for &v in &spec.values {
        for &k in &spec.schemes {
            let cells: Vec<&CellResult> = rows
                .iter()
                .filter(|r| r.axis_value == v && r.scheme == k && r.status.has_design() && r.power_watts() > 0.0)
                .collect();
            let dbm: Vec<f64> = cells.iter().map(|r| watts_to_dbm(r.power_watts())).collect();
            let an: Vec<f64> = cells.iter().filter_map(|r| r.design.as_ref().map(|d| d.an_fraction())).collect();
            let it: Vec<f64> = cells.iter().filter_map(|r| r.design.as_ref().map(|d| d.iterations() as f64)).collect();
            out.push(SummaryRow {
                axis_value: v,
                scheme: k,
                count: cells.len(),
                mean_dbm: mean(&dbm),
                median_dbm: median(dbm),
                mean_an_fraction: mean(&an),
                mean_iterations: mean(&it),
            });
        }
    }
    out
}

pub fn format_summary(spec: &SweepSpec, summary: &[SummaryRow]) -> String {
    let mut s = format!(
        "{:>12} {:>14} {:>6} {:>12} {:>12} {:>10} {:>8}\n",
        spec.axis.name(),
        "scheme",
        "count",
        "mean_dbm",
        "median_dbm",
        "an_frac",
        "iters"
    );
    for r in summary {
        let _ = writeln!(
            s,
            "{:>12} {:>14} {:>6} {:>12.4} {:>12.4} {:>10.4} {:>8.2}",
            r.axis_value,
            r.scheme.name(),
            r.count,
            r.mean_dbm,
            r.median_dbm,
            r.mean_an_fraction,
            r.mean_iterations
        );
    }
    s
}

/// Runs every cell and writes the CSV to `spec.out_path` when set.
pub fn run_sweep(
    spec: &SweepSpec,
    jobs: usize,
    progress: impl Fn(&CellResult) + Sync,
) -> Result<(Vec<CellResult>, Vec<SummaryRow>), SweepError> {
    spec.validate()?;
    let rows = run_cells(spec, jobs, progress);
    if let Some(path) = &spec.out_path {
        std::fs::write(path, to_csv(&rows, spec.base.k_eves))
            .map_err(|source| SweepError::Io { path: path.clone(), source })?;
    }
    let summary = summarize(spec, &rows);
    Ok((rows, summary))
}

/// A design stored on disk with everything needed to rebuild its scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignFile {
    pub config: ScenarioConfig,
    pub scheme: SchemeKind,
    pub status: CellStatus,
    pub power_watts: f64,
    /// `[re, im]` pairs.
    pub w_vec: Vec<[f64; 2]>,
    /// Row-major `[re, im]` pairs.
    pub z_mat: Vec<Vec<[f64; 2]>>,
    pub phi: Vec<[f64; 2]>,
}

fn pairs(v: &CVector) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn from_pairs(v: &[[f64; 2]]) -> CVector {
    CVector::from_iterator(v.len(), v.iter().map(|p| C64::new(p[0], p[1])))
}

impl DesignFile {
    pub fn from_cell(r: &CellResult) -> Option<Self> {
        let d = r.design.as_ref()?;
        let z = d.z_mat.matrix();
        Some(DesignFile {
            config: r.config.clone(),
            scheme: r.scheme,
            status: r.status,
            power_watts: r.power_watts(),
            w_vec: pairs(&d.w_vec),
            z_mat: (0..z.nrows()).map(|i| (0..z.ncols()).map(|j| [z[(i, j)].re, z[(i, j)].im]).collect()).collect(),
            phi: pairs(&d.phi),
        })
    }

    pub fn w_vec(&self) -> CVector {
        from_pairs(&self.w_vec)
    }

    pub fn phi(&self) -> CVector {
        from_pairs(&self.phi)
    }

    pub fn z_mat(&self) -> Result<Hermitian, SweepError> {
        let n = self.z_mat.len();
        if self.z_mat.iter().any(|r| r.len() != n) {
            return Err(SweepError::Design("z_mat is not square".into()));
        }
        let m = CMatrix::from_fn(n, n, |i, j| C64::new(self.z_mat[i][j][0], self.z_mat[i][j][1]));
        Hermitian::new(m).map_err(|e| SweepError::Design(e.to_string()))
    }

    /// Rebuilds the channels and a [`DesignSolution`] carrying the stored
    /// beamformer, AN covariance and phases.
    pub fn restore(&self) -> Result<(ChannelSet, DesignSolution), SweepError> {
        let cfg = &self.config;
        let ch = build_scenario(cfg, &mut scenario_rng(cfg.seed))?;
        let (w, z, phi) = (self.w_vec(), self.z_mat()?, self.phi());
        if w.len() != cfg.n_t || z.dim() != cfg.n_t || phi.len() != cfg.m {
            return Err(SweepError::Design("dimensions do not match the stored configuration".into()));
        }
        let mut d = DesignSolution::infeasible(cfg.n_t, cfg.m);
        d.w_mat = Hermitian::outer(&w);
        d.w_vec = w;
        d.z_mat = z;
        d.e_mat = crate::builder::phase_matrix(&phi);
        d.phi = phi;
        d.status = match self.status {
            CellStatus::MaxIters => crate::ao::AoStatus::MaxIters,
            CellStatus::Infeasible | CellStatus::Error => crate::ao::AoStatus::Infeasible,
            _ => crate::ao::AoStatus::Converged,
        };
        Ok((ch, d))
    }
}
