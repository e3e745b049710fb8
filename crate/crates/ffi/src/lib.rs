//! C ABI over the posn simulator.
//!
//! Every fallible function returns a [`PosnStatus`]; on failure a message is
//! available from [`posn_last_error_message`] on the same thread. Handles are
//! opaque and must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use posn::consensus::Protocol;
use posn::metrics::{export_run, summary_json, RunLog};
use posn::netsim::Scenario;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PosnStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    InvalidScenario = 4,
    IoError = 5,
    InvalidArgument = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PosnProtocol {
    Posn = 0,
    Pob = 1,
    Por = 2,
}

impl From<PosnProtocol> for Protocol {
    fn from(p: PosnProtocol) -> Self {
        match p {
            PosnProtocol::Posn => Protocol::Posn,
            PosnProtocol::Pob => Protocol::Pob,
            PosnProtocol::Por => Protocol::Por,
        }
    }
}

/// Scenario handle: config, load, faults and protocol.
pub struct PosnConfig {
    scenario: Scenario,
}

/// Completed run handle.
pub struct PosnRun {
    log: RunLog,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: PosnStatus, msg: impl Into<String>) -> PosnStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning panics into `PosnStatus::Panic`.
fn guard(f: impl FnOnce() -> PosnStatus) -> PosnStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(PosnStatus::Panic, "internal panic"))
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, PosnStatus> {
    if s.is_null() {
        return Err(fail(PosnStatus::NullArgument, "string argument is null"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(PosnStatus::InvalidUtf8, "string argument is not UTF-8"))
}

/// Message for the last failure on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn posn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Default scenario: four honest validators, PoSN, 100 tx/s for 10 s.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn posn_config_default(out: *mut *mut PosnConfig) -> PosnStatus {
    guard(|| {
        if out.is_null() {
            return fail(PosnStatus::NullArgument, "out is null");
        }
        *out = Box::into_raw(Box::new(PosnConfig {
            scenario: Scenario::default(),
        }));
        PosnStatus::Ok
    })
}

/// Parses a TOML scenario.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn posn_config_from_toml(toml: *const c_char, out: *mut *mut PosnConfig) -> PosnStatus {
    guard(|| {
        if out.is_null() {
            return fail(PosnStatus::NullArgument, "out is null");
        }
        let text = match read_str(toml) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match Scenario::from_toml(text) {
            Ok(scenario) => {
                *out = Box::into_raw(Box::new(PosnConfig { scenario }));
                PosnStatus::Ok
            }
            Err(e) => fail(PosnStatus::ParseError, e.to_string()),
        }
    })
}

/// # Safety
/// `cfg` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn posn_config_set_seed(cfg: *mut PosnConfig, seed: u64) -> PosnStatus {
    guard(|| match cfg.as_mut() {
        Some(c) => {
            c.scenario.seed = Some(seed);
            PosnStatus::Ok
        }
        None => fail(PosnStatus::NullArgument, "config is null"),
    })
}

/// # Safety
/// `cfg` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn posn_config_set_protocol(cfg: *mut PosnConfig, protocol: PosnProtocol) -> PosnStatus {
    guard(|| match cfg.as_mut() {
        Some(c) => {
            c.scenario.protocol = protocol.into();
            PosnStatus::Ok
        }
        None => fail(PosnStatus::NullArgument, "config is null"),
    })
}

/// # Safety
/// `cfg` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn posn_config_free(cfg: *mut PosnConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the scenario to completion.
///
/// # Safety
/// `cfg` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn posn_run(cfg: *const PosnConfig, out: *mut *mut PosnRun) -> PosnStatus {
    guard(|| {
        let (Some(c), false) = (cfg.as_ref(), out.is_null()) else {
            return fail(PosnStatus::NullArgument, "config or out is null");
        };
        match c.scenario.run() {
            Ok(log) => {
                *out = Box::into_raw(Box::new(PosnRun { log }));
                PosnStatus::Ok
            }
            Err(e) => fail(PosnStatus::InvalidScenario, e.to_string()),
        }
    })
}

/// Summary statistics as a JSON string; release with [`posn_string_free`].
///
/// # Safety
/// `run` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn posn_run_summary_json(run: *const PosnRun, out: *mut *mut c_char) -> PosnStatus {
    guard(|| {
        let (Some(r), false) = (run.as_ref(), out.is_null()) else {
            return fail(PosnStatus::NullArgument, "run or out is null");
        };
        match CString::new(summary_json(&r.log)) {
            Ok(s) => {
                *out = s.into_raw();
                PosnStatus::Ok
            }
            Err(_) => fail(PosnStatus::Panic, "summary contains NUL"),
        }
    })
}

/// Writes the run's CSV and JSON exports into `dir`.
///
/// # Safety
/// `run` must come from this library and `dir` must be a NUL-terminated
/// string.
#[no_mangle]
pub unsafe extern "C" fn posn_run_export(run: *const PosnRun, dir: *const c_char) -> PosnStatus {
    guard(|| {
        let Some(r) = run.as_ref() else {
            return fail(PosnStatus::NullArgument, "run is null");
        };
        let dir = match read_str(dir) {
            Ok(d) => d,
            Err(s) => return s,
        };
        match export_run(&r.log, Path::new(dir)) {
            Ok(()) => PosnStatus::Ok,
            Err(e) => fail(PosnStatus::IoError, format!("{dir}: {e}")),
        }
    })
}

/// Number of safety or accounting violations detected; 0 for a clean run
/// and `u64::MAX` for a null handle.
///
/// # Safety
/// `run` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn posn_run_violation_count(run: *const PosnRun) -> u64 {
    run.as_ref().map_or(u64::MAX, |r| r.log.violations.len() as u64)
}

/// Number of finalized slots; 0 for a null handle.
///
/// # Safety
/// `run` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn posn_run_finalized_slots(run: *const PosnRun) -> u64 {
    run.as_ref().map_or(0, |r| r.log.finalized_slots().count() as u64)
}

/// # Safety
/// `run` must come from this library or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn posn_run_free(run: *mut PosnRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// # Safety
/// `s` must be a string returned by this library or null.
#[no_mangle]
pub unsafe extern "C" fn posn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Votes needed to finalize among `n` validators.
#[no_mangle]
pub extern "C" fn posn_quorum_threshold(n: usize) -> usize {
    posn::consensus::quorum_threshold(n)
}

/// Shannon entropy in bits of `counts[0..len]`.
///
/// # Safety
/// `counts` must point to `len` values (or be null with `len == 0`) and
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn posn_leader_entropy(counts: *const u64, len: usize, out: *mut f64) -> PosnStatus {
    guard(|| {
        if out.is_null() || (counts.is_null() && len > 0) {
            return fail(PosnStatus::NullArgument, "counts or out is null");
        }
        let xs = if len == 0 { &[][..] } else { std::slice::from_raw_parts(counts, len) };
        *out = posn::metrics::leader_entropy(xs);
        PosnStatus::Ok
    })
}

/// One LIF micro-step from potential `*v`; updates `*v` and sets `*spiked`.
///
/// # Safety
/// `v` and `spiked` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn posn_lif_step(
    v: *mut f64,
    current: f64,
    lambda: f64,
    dt: f64,
    theta: f64,
    v_reset: f64,
    spiked: *mut bool,
) -> PosnStatus {
    guard(|| {
        if v.is_null() || spiked.is_null() {
            return fail(PosnStatus::NullArgument, "v or spiked is null");
        }
        if !(lambda.is_finite() && lambda >= 0.0 && dt.is_finite() && dt > 0.0) {
            return fail(PosnStatus::InvalidArgument, "lambda must be >= 0 and dt > 0");
        }
        let state = posn::neuro::NeuronState {
            v: *v,
            lambda,
            theta,
            v_reset,
        };
        let (next, s) = posn::neuro::lif_step(state, current, dt);
        *v = next.v;
        *spiked = s;
        PosnStatus::Ok
    })
}
