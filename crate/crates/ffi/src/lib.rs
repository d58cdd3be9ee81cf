//! C ABI for ilbench.
//!
//! Objects are opaque handles created by `ilb_*_new`/`ilb_*_from_*`/`ilb_*_run`
//! and released with the matching `*_free`. Every fallible call returns an
//! [`IlbStatus`]; on failure [`ilb_last_error`] describes the problem for the
//! calling thread. Strings returned to the caller are owned by the caller and
//! must be released with [`ilb_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ilbench::cliff::{build_cliff, CliffConfig};
use ilbench::harness::{emit_outputs, ledger_csv, results_csv, run_experiment, ExperimentConfig, ExperimentResult};
use ilbench::mdp::{exact_return, DetPolicy, MdpBundle, Policy, PolicyJson, TabularMdp};
use ilbench::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IlbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Input = 4,
    EmptyModel = 5,
    Realizability = 6,
    Size = 7,
    Validation = 8,
    Io = 9,
    Json = 10,
    Panic = 11,
}

/// An MDP, optionally with its expert policy.
pub struct IlbMdp {
    mdp: TabularMdp,
    expert: Option<DetPolicy>,
}

pub struct IlbPolicy {
    policy: Policy,
}

pub struct IlbExperiment {
    config: ExperimentConfig,
    result: ExperimentResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> IlbStatus {
    match err {
        Error::Config(_) => IlbStatus::Config,
        Error::Input(_) => IlbStatus::Input,
        Error::EmptyModel => IlbStatus::EmptyModel,
        Error::Realizability(_) => IlbStatus::Realizability,
        Error::Size { .. } => IlbStatus::Size,
        Error::Validation(_) => IlbStatus::Validation,
        Error::Io(_) => IlbStatus::Io,
        Error::Json(_) => IlbStatus::Json,
    }
}

struct Fail(IlbStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> IlbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IlbStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".to_string());
            IlbStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(IlbStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(IlbStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail(IlbStatus::NullPointer, format!("{what} is null")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail(IlbStatus::NullPointer, "output pointer is null".to_string()));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message for the most recent failure on this thread; empty if none.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn ilb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn ilb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a cliff MDP from a preset name (`figure2` or `theorem`).
///
/// # Safety
/// `preset` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ilb_mdp_cliff(preset: *const c_char, out: *mut *mut IlbMdp) -> IlbStatus {
    guard(|| {
        let world = build_cliff(&CliffConfig::preset(text(preset, "preset")?)?)?;
        put(out, IlbMdp { mdp: world.mdp, expert: Some(world.expert) })
    })
}

/// Parses an MDP bundle (`{"mdp": ..., "expert": ...}`) from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ilb_mdp_from_json(json: *const c_char, out: *mut *mut IlbMdp) -> IlbStatus {
    guard(|| {
        let bundle: MdpBundle = serde_json::from_str(text(json, "json")?).map_err(Error::from)?;
        let mdp = bundle.mdp.to_mdp()?;
        let expert = bundle.expert()?;
        put(out, IlbMdp { mdp, expert })
    })
}

/// # Safety
/// `mdp` must be a live handle; the output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn ilb_mdp_dims(
    mdp: *const IlbMdp,
    num_states: *mut usize,
    num_actions: *mut usize,
    horizon: *mut usize,
) -> IlbStatus {
    guard(|| {
        let m = &handle(mdp, "mdp")?.mdp;
        for (p, v) in [(num_states, m.num_states()), (num_actions, m.num_actions()), (horizon, m.horizon())] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Copies the bundled expert policy into a new policy handle.
///
/// # Safety
/// `mdp` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ilb_mdp_expert(mdp: *const IlbMdp, out: *mut *mut IlbPolicy) -> IlbStatus {
    guard(|| {
        let expert = handle(mdp, "mdp")?
            .expert
            .clone()
            .ok_or_else(|| Fail(IlbStatus::Config, "the MDP has no expert policy".to_string()))?;
        put(out, IlbPolicy { policy: Policy::Det(expert) })
    })
}

/// # Safety
/// `mdp` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ilb_mdp_free(mdp: *mut IlbMdp) {
    if !mdp.is_null() {
        drop(Box::from_raw(mdp));
    }
}

/// Parses a policy tagged by `"kind"` from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ilb_policy_from_json(json: *const c_char, out: *mut *mut IlbPolicy) -> IlbStatus {
    guard(|| {
        let p: PolicyJson = serde_json::from_str(text(json, "json")?).map_err(Error::from)?;
        put(out, IlbPolicy { policy: p.to_policy()? })
    })
}

/// # Safety
/// `policy` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ilb_policy_free(policy: *mut IlbPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Exact expected return of `policy` in `mdp`.
///
/// # Safety
/// Both handles must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ilb_exact_return(mdp: *const IlbMdp, policy: *const IlbPolicy, out: *mut f64) -> IlbStatus {
    guard(|| {
        let j = exact_return(&handle(mdp, "mdp")?.mdp, &handle(policy, "policy")?.policy)?;
        *out.as_mut().ok_or_else(|| Fail(IlbStatus::NullPointer, "output pointer is null".to_string()))? = j;
        Ok(())
    })
}

/// Runs an experiment from JSON config text on `threads` workers (0 = all cores).
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ilb_experiment_run(
    config_json: *const c_char,
    threads: usize,
    out: *mut *mut IlbExperiment,
) -> IlbStatus {
    guard(|| {
        let config = ExperimentConfig::from_json(text(config_json, "config_json")?)?;
        let result = run_experiment(&config, (threads > 0).then_some(threads))?;
        put(out, IlbExperiment { config, result })
    })
}

/// `results.csv` contents; release with [`ilb_string_free`].
///
/// # Safety
/// `exp` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ilb_experiment_results_csv(exp: *const IlbExperiment) -> *mut c_char {
    exp.as_ref().map_or(ptr::null_mut(), |e| owned_string(results_csv(&e.result.curves)))
}

/// `ledger.csv` contents; release with [`ilb_string_free`].
///
/// # Safety
/// `exp` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ilb_experiment_ledger_csv(exp: *const IlbExperiment) -> *mut c_char {
    exp.as_ref().map_or(ptr::null_mut(), |e| owned_string(ledger_csv(&e.result.curves)))
}

/// Writes CSV, config and SVG outputs into `dir`.
///
/// # Safety
/// `exp` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ilb_experiment_write(exp: *const IlbExperiment, dir: *const c_char) -> IlbStatus {
    guard(|| {
        let e = handle(exp, "experiment")?;
        emit_outputs(&e.result, &e.config, Path::new(text(dir, "dir")?))?;
        Ok(())
    })
}

/// # Safety
/// `exp` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ilb_experiment_free(exp: *mut IlbExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// # Safety
/// `s` must be a string returned by this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ilb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
