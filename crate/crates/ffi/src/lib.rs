//! C ABI over the `freqsec` library.
//!
//! Systems are loaded from `system.json` text into an opaque
//! [`FreqsecSystem`] handle. Every fallible call returns a [`FreqsecStatus`];
//! on failure [`freqsec_last_error`] describes the cause. Strings returned to
//! the caller must be released with [`freqsec_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use freqsec::dispatch::{solve_dispatch, DispatchCase};
use freqsec::io::SystemInput;
use freqsec::{dynamics, security, Error};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreqsecStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    InvalidInput = 4,
    /// The requirement cannot be met (e.g. no nadir because FR never covers the loss).
    Infeasible = 5,
    /// Solver trouble: numerical failure or node limit.
    Solver = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

/// Snapshot, requirements and optional chance model parsed from `system.json`.
pub struct FreqsecSystem(SystemInput);

/// Flat copy of a security assessment. Unavailable nadir quantities are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreqsecReport {
    pub secure: bool,
    pub rocof_ok: bool,
    pub steady_state_ok: bool,
    pub nadir_ok: bool,
    /// Inertia margin of the RoCoF requirement (MW·s).
    pub rocof_margin: f64,
    /// Total FR minus the loss (MW).
    pub steady_state_margin: f64,
    pub nadir_time: f64,
    pub nadir_depth: f64,
    pub soc_slack_ratio: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn status_of(err: &Error) -> FreqsecStatus {
    match err {
        Error::Parse(_) => FreqsecStatus::Parse,
        Error::Infeasible(_) | Error::SteadyStateInfeasible { .. } => FreqsecStatus::Infeasible,
        Error::NumericalFailure { .. } | Error::NodeLimit { .. } => FreqsecStatus::Solver,
        _ => FreqsecStatus::InvalidInput,
    }
}

/// Runs `body`, translating errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), FreqsecStatus>) -> FreqsecStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            FreqsecStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(_) => {
            set_error("internal panic");
            FreqsecStatus::Panic
        }
    }
}

fn fail(err: Error) -> FreqsecStatus {
    set_error(err.to_string());
    status_of(&err)
}

fn null(what: &str) -> FreqsecStatus {
    set_error(format!("{what} is null"));
    FreqsecStatus::NullPointer
}

/// # Safety
/// `s` must be null or a NUL-terminated string.
unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, FreqsecStatus> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s).to_str().map_err(|e| {
        set_error(format!("{what}: {e}"));
        FreqsecStatus::InvalidUtf8
    })
}

/// # Safety
/// `p` must be null or valid for writes.
unsafe fn write<T>(p: *mut T, value: T, what: &str) -> Result<(), FreqsecStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(value);
    Ok(())
}

/// # Safety
/// `system` must be null or a handle from [`freqsec_system_from_json`].
unsafe fn system<'a>(system: *const FreqsecSystem) -> Result<&'a SystemInput, FreqsecStatus> {
    system.as_ref().map(|s| &s.0).ok_or_else(|| null("system"))
}

/// Parses and validates a `system.json` document into a new handle.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn freqsec_system_from_json(
    json: *const c_char,
    out: *mut *mut FreqsecSystem,
) -> FreqsecStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = read_str(json, "json")?;
        let input = SystemInput::from_json(text).map_err(fail)?;
        *out = Box::into_raw(Box::new(FreqsecSystem(input)));
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `system` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn freqsec_system_free(system: *mut FreqsecSystem) {
    if !system.is_null() {
        drop(Box::from_raw(system));
    }
}

/// Assesses the RoCoF, steady-state and nadir requirements.
///
/// # Safety
/// `system` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn freqsec_assess(
    system: *const FreqsecSystem,
    out: *mut FreqsecReport,
) -> FreqsecStatus {
    guard(|| {
        let s = self::system(system)?;
        let r = security::assess(&s.snapshot, &s.spec, s.chance.as_ref()).map_err(fail)?;
        let report = FreqsecReport {
            secure: r.is_secure(),
            rocof_ok: r.rocof_ok,
            steady_state_ok: r.steady_state_ok,
            nadir_ok: r.nadir_ok,
            rocof_margin: r.rocof_margin,
            steady_state_margin: r.steady_state_margin,
            nadir_time: r.nadir_time.unwrap_or(f64::NAN),
            nadir_depth: r.nadir_depth.unwrap_or(f64::NAN),
            soc_slack_ratio: r.soc_slack_ratio.unwrap_or(f64::NAN),
        };
        write(out, report, "out")
    })
}

/// Closed-form nadir instant (s), depth (Hz) and active interval index.
///
/// # Safety
/// `system` must be a live handle; the out pointers valid for writes.
#[no_mangle]
pub unsafe extern "C" fn freqsec_nadir(
    system: *const FreqsecSystem,
    time: *mut f64,
    depth: *mut f64,
    interval: *mut usize,
) -> FreqsecStatus {
    guard(|| {
        let s = self::system(system)?;
        let n = dynamics::nadir(&s.snapshot, &s.spec).map_err(fail)?;
        write(time, n.time, "time")?;
        write(depth, n.depth, "depth")?;
        write(interval, n.interval, "interval")
    })
}

/// Magnitude of the RoCoF at the fault instant (Hz/s).
///
/// # Safety
/// `system` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn freqsec_rocof(system: *const FreqsecSystem, out: *mut f64) -> FreqsecStatus {
    guard(|| {
        let s = self::system(system)?;
        let v = dynamics::rocof_initial(&s.snapshot, &s.spec).map_err(fail)?;
        write(out, v, "out")
    })
}

/// Frequency deviation at `t` seconds after the loss (Hz, negative below nominal).
///
/// # Safety
/// `system` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn freqsec_delta_f(
    system: *const FreqsecSystem,
    t: f64,
    out: *mut f64,
) -> FreqsecStatus {
    guard(|| {
        let s = self::system(system)?;
        let v = dynamics::delta_f(t, &s.snapshot, &s.spec).map_err(fail)?;
        write(out, v, "out")
    })
}

/// Standard normal quantile for `p` in (0, 1).
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn freqsec_normal_inv_cdf(p: f64, out: *mut f64) -> FreqsecStatus {
    guard(|| {
        let v = security::normal_inv_cdf(p).map_err(fail)?;
        write(out, v, "out")
    })
}

/// Solves a dispatch case given as JSON and returns the schedule as JSON in
/// `*schedule`, to be released with [`freqsec_string_free`].
///
/// # Safety
/// `case_json` must be a NUL-terminated string and `schedule` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn freqsec_optimize_json(
    case_json: *const c_char,
    gap: f64,
    schedule: *mut *mut c_char,
) -> FreqsecStatus {
    guard(|| {
        if schedule.is_null() {
            return Err(null("schedule"));
        }
        *schedule = ptr::null_mut();
        let text = read_str(case_json, "case_json")?;
        if !(gap > 0.0 && gap <= 0.5) {
            return Err(fail(Error::InvalidInput {
                field: "gap".into(),
                reason: format!("must lie in (0, 0.5], got {gap}"),
            }));
        }
        let case = DispatchCase::from_json(text).map_err(fail)?;
        let result = solve_dispatch(&case, gap).map_err(fail)?;
        let json = CString::new(result.to_json()).map_err(|_| {
            set_error("schedule contains NUL");
            FreqsecStatus::Panic
        })?;
        *schedule = json.into_raw();
        Ok(())
    })
}

/// Releases a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn freqsec_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn freqsec_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn freqsec_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}
