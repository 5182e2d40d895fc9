//! C interface to the design library.
//!
//! Objects are opaque handles created by `irs_*_new`/`irs_design_run` and
//! released with the matching `*_free`. Every fallible call returns an
//! [`IrsStatus`]; on failure [`irs_last_error`] describes the cause for the
//! calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use irs_outage::ao::{AoStatus, DesignSolution};
use irs_outage::benchmarks::{run_scheme, SchemeKind};
use irs_outage::builder::DesignParams;
use irs_outage::channel::{build_scenario, ChannelSet, ScenarioConfig};
use irs_outage::sweep::{parse_config, scenario_rng, scheme_rng, validation_rng};
use irs_outage::validator::monte_carlo_outage;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Solver = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Design scheme selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrsScheme {
    Proposed = 0,
    RandomIrs = 1,
    OptimizedMrt = 2,
    RandomMrt = 3,
}

/// Optimizer outcome of a design.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrsDesignStatus {
    Converged = 0,
    MaxIters = 1,
    Infeasible = 2,
}

/// Scenario parameters (opaque).
pub struct IrsScenario {
    config: ScenarioConfig,
}

/// Channels and the design computed on them (opaque).
pub struct IrsDesign {
    config: ScenarioConfig,
    channels: ChannelSet,
    design: DesignSolution,
    seed: u64,
    scheme: SchemeKind,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: IrsStatus, msg: impl Into<String>) -> IrsStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> IrsStatus) -> IrsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == IrsStatus::Ok {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            s
        }
        Err(_) => fail(IrsStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, IrsStatus> {
    if p.is_null() {
        return Err(fail(IrsStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(IrsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn scheme_kind(s: IrsScheme) -> SchemeKind {
    match s {
        IrsScheme::Proposed => SchemeKind::Proposed,
        IrsScheme::RandomIrs => SchemeKind::RandomIrs,
        IrsScheme::OptimizedMrt => SchemeKind::OptimizedMrt,
        IrsScheme::RandomMrt => SchemeKind::RandomMrt,
    }
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn irs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn irs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a scenario with the default parameters.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn irs_scenario_new(out: *mut *mut IrsScenario) -> IrsStatus {
    guard(|| {
        if out.is_null() {
            return fail(IrsStatus::NullPointer, "out is null");
        }
        *out = Box::into_raw(Box::new(IrsScenario { config: ScenarioConfig::default() }));
        IrsStatus::Ok
    })
}

/// Creates a scenario from configuration-file text; a `[sweep]` section,
/// if present, is ignored.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn irs_scenario_from_config(text: *const c_char, out: *mut *mut IrsScenario) -> IrsStatus {
    guard(|| {
        if out.is_null() {
            return fail(IrsStatus::NullPointer, "out is null");
        }
        let text = match str_arg(text, "text") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match parse_config(text) {
            Ok(spec) => {
                *out = Box::into_raw(Box::new(IrsScenario { config: spec.base }));
                IrsStatus::Ok
            }
            Err(e) => fail(IrsStatus::Config, e.to_string()),
        }
    })
}

/// Sets one scenario parameter using the configuration-file key names.
///
/// # Safety
/// `scenario` must come from this library; `key` and `value` must be
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn irs_scenario_set(
    scenario: *mut IrsScenario,
    key: *const c_char,
    value: *const c_char,
) -> IrsStatus {
    guard(|| {
        let Some(s) = scenario.as_mut() else {
            return fail(IrsStatus::NullPointer, "scenario is null");
        };
        let (key, value) = match (str_arg(key, "key"), str_arg(value, "value")) {
            (Ok(k), Ok(v)) => (k, v),
            (Err(e), _) | (_, Err(e)) => return e,
        };
        let mut cfg = s.config.clone();
        if let Err(e) = cfg.set(key, value).and_then(|_| cfg.validate()) {
            return fail(IrsStatus::Config, e.to_string());
        }
        s.config = cfg;
        IrsStatus::Ok
    })
}

/// Releases a scenario. Null is ignored.
///
/// # Safety
/// `scenario` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn irs_scenario_free(scenario: *mut IrsScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Draws the channels for `seed` and runs `scheme` on them. The result is
/// identical to the CLI cell with the same scenario, seed and scheme.
///
/// # Safety
/// `scenario` must come from this library and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irs_design_run(
    scenario: *const IrsScenario,
    scheme: IrsScheme,
    seed: u64,
    out: *mut *mut IrsDesign,
) -> IrsStatus {
    guard(|| {
        let Some(s) = scenario.as_ref() else {
            return fail(IrsStatus::NullPointer, "scenario is null");
        };
        if out.is_null() {
            return fail(IrsStatus::NullPointer, "out is null");
        }
        let mut config = s.config.clone();
        config.seed = seed;
        let channels = match build_scenario(&config, &mut scenario_rng(seed)) {
            Ok(c) => c,
            Err(e) => return fail(IrsStatus::Config, e.to_string()),
        };
        let kind = scheme_kind(scheme);
        let params = DesignParams::from_config(&config);
        match run_scheme(kind, &channels, &params, &mut scheme_rng(seed, kind)) {
            Ok(design) => {
                *out = Box::into_raw(Box::new(IrsDesign { config, channels, design, seed, scheme: kind }));
                IrsStatus::Ok
            }
            Err(e) => fail(IrsStatus::Solver, e.to_string()),
        }
    })
}

/// Releases a design. Null is ignored.
///
/// # Safety
/// `design` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn irs_design_free(design: *mut IrsDesign) {
    if !design.is_null() {
        drop(Box::from_raw(design));
    }
}

unsafe fn with_design(design: *const IrsDesign, f: impl FnOnce(&IrsDesign) -> IrsStatus) -> IrsStatus {
    guard(|| match design.as_ref() {
        Some(d) => f(d),
        None => fail(IrsStatus::NullPointer, "design is null"),
    })
}

unsafe fn write_scalar<T>(out: *mut T, v: T) -> IrsStatus {
    if out.is_null() {
        return fail(IrsStatus::NullPointer, "out is null");
    }
    *out = v;
    IrsStatus::Ok
}

/// Copies `values` to `out` (capacity `len`); `needed` receives the count.
unsafe fn write_slice(values: &[f64], out: *mut f64, len: usize, needed: *mut usize) -> IrsStatus {
    if !needed.is_null() {
        *needed = values.len();
    }
    if len < values.len() {
        return fail(IrsStatus::BufferTooSmall, format!("need {} entries, got {len}", values.len()));
    }
    if out.is_null() {
        return fail(IrsStatus::NullPointer, "out is null");
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    IrsStatus::Ok
}

/// Optimizer outcome.
///
/// # Safety
/// `design` must come from this library and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irs_design_status(design: *const IrsDesign, out: *mut IrsDesignStatus) -> IrsStatus {
    with_design(design, |d| {
        let s = match d.design.status {
            AoStatus::Converged => IrsDesignStatus::Converged,
            AoStatus::MaxIters => IrsDesignStatus::MaxIters,
            AoStatus::Infeasible => IrsDesignStatus::Infeasible,
        };
        write_scalar(out, s)
    })
}

/// Transmitted power `||w||^2 + Tr(Z)` in watts.
///
/// # Safety
/// `design` must come from this library and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irs_design_power(design: *const IrsDesign, out: *mut f64) -> IrsStatus {
    with_design(design, |d| write_scalar(out, d.design.power()))
}

/// Share of the transmitted power spent on artificial noise.
///
/// # Safety
/// `design` must come from this library and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irs_design_an_fraction(design: *const IrsDesign, out: *mut f64) -> IrsStatus {
    with_design(design, |d| write_scalar(out, d.design.an_fraction()))
}

/// Number of covariance updates performed.
///
/// # Safety
/// `design` must come from this library and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irs_design_iterations(design: *const IrsDesign, out: *mut usize) -> IrsStatus {
    with_design(design, |d| write_scalar(out, d.design.iterations()))
}

/// Transmit antennas, IRS elements and Eves of the design's scenario.
///
/// # Safety
/// `design` must come from this library; each output pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn irs_design_dims(
    design: *const IrsDesign,
    n_t: *mut usize,
    m: *mut usize,
    k_eves: *mut usize,
) -> IrsStatus {
    with_design(design, |d| {
        for (p, v) in [(n_t, d.channels.n_t()), (m, d.channels.m()), (k_eves, d.channels.k_eves())] {
            if !p.is_null() {
                *p = v;
            }
        }
        IrsStatus::Ok
    })
}

fn interleave<'a>(v: impl Iterator<Item = &'a irs_outage::linalg::C64>) -> Vec<f64> {
    v.flat_map(|z| [z.re, z.im]).collect()
}

/// Beamformer `w` as interleaved (re, im) pairs, `2 N_t` values.
///
/// # Safety
/// `design` must come from this library; `out` must hold `len` doubles;
/// `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn irs_design_beamformer(
    design: *const IrsDesign,
    out: *mut f64,
    len: usize,
    needed: *mut usize,
) -> IrsStatus {
    with_design(design, |d| write_slice(&interleave(d.design.w_vec.iter()), out, len, needed))
}

/// IRS reflection coefficients as interleaved (re, im) pairs, `2 M` values.
///
/// # Safety
/// `design` must come from this library; `out` must hold `len` doubles;
/// `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn irs_design_phases(
    design: *const IrsDesign,
    out: *mut f64,
    len: usize,
    needed: *mut usize,
) -> IrsStatus {
    with_design(design, |d| write_slice(&interleave(d.design.phi.iter()), out, len, needed))
}

/// AN covariance, column-major, as interleaved (re, im) pairs, `2 N_t^2`
/// values.
///
/// # Safety
/// `design` must come from this library; `out` must hold `len` doubles;
/// `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn irs_design_an_covariance(
    design: *const IrsDesign,
    out: *mut f64,
    len: usize,
    needed: *mut usize,
) -> IrsStatus {
    with_design(design, |d| write_slice(&interleave(d.design.z_mat.matrix().iter()), out, len, needed))
}

/// Monte-Carlo secrecy outage per Eve (one value per Eve). `trials` must be
/// at least 1. The draws are the CLI validation stream for the design's
/// seed and scheme.
///
/// # Safety
/// `design` must come from this library; `out` must hold `len` doubles;
/// `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn irs_design_outage(
    design: *const IrsDesign,
    trials: usize,
    out: *mut f64,
    len: usize,
    needed: *mut usize,
) -> IrsStatus {
    with_design(design, |d| {
        if trials == 0 {
            return fail(IrsStatus::InvalidArgument, "trials must be positive");
        }
        let mut rng = validation_rng(d.seed, d.scheme);
        match monte_carlo_outage(&d.design, &d.channels, d.config.beta(), trials, 1, &mut rng) {
            Ok(r) => write_slice(&r.per_eve_outage, out, len, needed),
            Err(e) => fail(IrsStatus::Solver, e.to_string()),
        }
    })
}
