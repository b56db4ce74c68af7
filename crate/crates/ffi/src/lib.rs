//! C interface. Handles are opaque; every call returns an `LcStatus`.
//! Strings returned through out-pointers are owned by the caller and
//! released with `lc_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use lumpcirc::config::{parse_config, physiological_default, RunConfig};
use lumpcirc::integrate::Trajectory;
use lumpcirc::output::report_json;
use lumpcirc::run::{self, exit};
use lumpcirc::{verify, Error};

/// Status codes; values 0 to 7 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcStatus {
    Ok = 0,
    VerifyFailed = 1,
    /// Null pointer, bad UTF-8 or out-of-range index.
    InvalidArgument = 2,
    Config = 3,
    Integration = 4,
    Coupling = 5,
    Io = 6,
    Analysis = 7,
    Panic = 8,
}

/// Parsed run configuration.
pub struct LcConfig {
    inner: RunConfig,
}

/// Completed simulation together with the configuration that produced it.
pub struct LcRun {
    cfg: RunConfig,
    out: run::RunOutput,
}

/// Number of entries in a state vector.
pub const LC_STATE_LEN: usize = 12;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = s);
}

fn status_of(e: &Error) -> LcStatus {
    match run::exit_code(e) {
        exit::CONFIG => LcStatus::Config,
        exit::INTEGRATION => LcStatus::Integration,
        exit::COUPLING => LcStatus::Coupling,
        exit::IO => LcStatus::Io,
        exit::ANALYSIS => LcStatus::Analysis,
        _ => LcStatus::Panic,
    }
}

fn fail(e: Error) -> LcStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn invalid(msg: &str) -> LcStatus {
    set_error(msg);
    LcStatus::InvalidArgument
}

fn guard(f: impl FnOnce() -> LcStatus) -> LcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            LcStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> Option<&'a str> {
    if p.is_null() {
        return None;
    }
    CStr::from_ptr(p).to_str().ok()
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> LcStatus {
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            LcStatus::Ok
        }
        Err(_) => invalid("string contains NUL"),
    }
}

fn boxed<T>(out: *mut *mut T, v: T) -> LcStatus {
    unsafe { *out = Box::into_raw(Box::new(v)) };
    LcStatus::Ok
}

/// Message of the last failed call on this thread. Valid until the next call.
#[no_mangle]
pub extern "C" fn lc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn lc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_config_default(out: *mut *mut LcConfig) -> LcStatus {
    if out.is_null() {
        return invalid("null out pointer");
    }
    guard(|| boxed(out, LcConfig { inner: physiological_default() }))
}

/// Parses configuration text.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_config_parse(text: *const c_char, out: *mut *mut LcConfig) -> LcStatus {
    let Some(text) = str_arg(text) else {
        return invalid("text is null or not UTF-8");
    };
    if out.is_null() {
        return invalid("null out pointer");
    }
    guard(|| match parse_config(text) {
        Ok(inner) => boxed(out, LcConfig { inner }),
        Err(e) => fail(e.into()),
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_config_load(path: *const c_char, out: *mut *mut LcConfig) -> LcStatus {
    let Some(path) = str_arg(path) else {
        return invalid("path is null or not UTF-8");
    };
    if out.is_null() {
        return invalid("null out pointer");
    }
    guard(|| match run::load_config(Path::new(path)) {
        Ok(inner) => boxed(out, LcConfig { inner }),
        Err(e) => fail(e),
    })
}

/// Overrides the number of simulated and analyzed beats.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lc_config_set_beats(cfg: *mut LcConfig, beats: usize, analyze_beats: usize) -> LcStatus {
    let Some(cfg) = cfg.as_mut() else {
        return invalid("null config");
    };
    guard(|| {
        let mut next = cfg.inner.clone();
        next.beats = beats;
        next.analyze_beats = analyze_beats;
        match run::revalidate(&next) {
            Ok(()) => {
                cfg.inner = next;
                LcStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Sets the output directory used by `lc_run_write`.
///
/// # Safety
/// `cfg` must be a live handle; `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lc_config_set_output_dir(cfg: *mut LcConfig, dir: *const c_char) -> LcStatus {
    let Some(cfg) = cfg.as_mut() else {
        return invalid("null config");
    };
    let Some(dir) = str_arg(dir) else {
        return invalid("dir is null or not UTF-8");
    };
    cfg.inner.output.dir = dir.into();
    LcStatus::Ok
}

/// # Safety
/// `cfg` must come from `lc_config_*` or be null.
#[no_mangle]
pub unsafe extern "C" fn lc_config_free(cfg: *mut LcConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the configured model (monolithic or coupled).
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_simulate(cfg: *const LcConfig, out: *mut *mut LcRun) -> LcStatus {
    let Some(cfg) = cfg.as_ref() else {
        return invalid("null config");
    };
    if out.is_null() {
        return invalid("null out pointer");
    }
    guard(|| match run::execute(&cfg.inner) {
        Ok(o) => boxed(
            out,
            LcRun {
                cfg: cfg.inner.clone(),
                out: o,
            },
        ),
        Err(e) => fail(e),
    })
}

/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lc_run_sample_count(run: *const LcRun) -> usize {
    run.as_ref().map_or(0, |r| r.out.trajectory.len())
}

fn trajectory(run: &LcRun) -> &Trajectory {
    &run.out.trajectory
}

/// Copies sample `index`: its time into `t` and the state into `state[0..LC_STATE_LEN]`.
///
/// # Safety
/// `run` must be a live handle; `t` writable; `state` must hold `LC_STATE_LEN` doubles.
#[no_mangle]
pub unsafe extern "C" fn lc_run_sample(run: *const LcRun, index: usize, t: *mut f64, state: *mut f64) -> LcStatus {
    let Some(run) = run.as_ref() else {
        return invalid("null run");
    };
    if t.is_null() || state.is_null() {
        return invalid("null out pointer");
    }
    let Some(s) = trajectory(run).samples.get(index) else {
        return invalid("sample index out of range");
    };
    *t = s.t;
    ptr::copy_nonoverlapping(s.state.to_array().as_ptr(), state, LC_STATE_LEN);
    LcStatus::Ok
}

/// Energy report as JSON.
///
/// # Safety
/// `run` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lc_run_report_json(run: *const LcRun, out: *mut *mut c_char) -> LcStatus {
    let Some(run) = run.as_ref() else {
        return invalid("null run");
    };
    if out.is_null() {
        return invalid("null out pointer");
    }
    guard(|| match run::report(&run.cfg, &run.out) {
        Ok(r) => put_string(out, report_json(&r)),
        Err(e) => fail(e),
    })
}

/// Writes the time series and report into the configured output directory.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lc_run_write(run: *const LcRun) -> LcStatus {
    let Some(run) = run.as_ref() else {
        return invalid("null run");
    };
    guard(|| {
        let res = run::report(&run.cfg, &run.out).and_then(|r| run::write_outputs(&run.cfg, &run.out, &r));
        match res {
            Ok(_) => LcStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `run` must come from `lc_simulate` or be null.
#[no_mangle]
pub unsafe extern "C" fn lc_run_free(run: *mut LcRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Runs the audit suite. Returns `LC_STATUS_VERIFY_FAILED` if any check fails.
/// `checks_json` may be null; otherwise it receives the check list as JSON.
///
/// # Safety
/// `cfg` must be a live handle; `checks_json` null or writable.
#[no_mangle]
pub unsafe extern "C" fn lc_verify(cfg: *const LcConfig, checks_json: *mut *mut c_char) -> LcStatus {
    let Some(cfg) = cfg.as_ref() else {
        return invalid("null config");
    };
    guard(|| match verify::verify(&cfg.inner) {
        Ok(checks) => {
            if !checks_json.is_null() {
                let s = serde_json::to_string(&checks).expect("checks serialize");
                let st = put_string(checks_json, s);
                if st != LcStatus::Ok {
                    return st;
                }
            }
            if verify::all_passed(&checks) {
                LcStatus::Ok
            } else {
                set_error("verification failed");
                LcStatus::VerifyFailed
            }
        }
        Err(e) => fail(e),
    })
}
