//! C interface to `ife-core`.
//!
//! Objects are opaque handles created by `*_from_json` and released with the
//! matching `*_free`. Every fallible call returns an [`IfeStatus`]; on failure
//! [`ife_last_error`] describes the most recent error on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ife_core::codec::{time_varying_rate, transmission_rate, CoderController};
use ife_core::entropy::{invariance_entropy_ub, EntropyLimits, Hinv};
use ife_core::io::{ControllerFile, Model, SystemFile};
use ife_core::linear::{entropy_lower_bound, parse_rational, static_rate_lower_bound, LinearBoundInput};
use ife_core::system::is_controlled_invariant;
use ife_core::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IfeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    InvalidModel = 4,
    NotInvariant = 5,
    InvalidController = 6,
    Budget = 7,
    Domain = 8,
    Panic = 9,
}

/// A loaded system with its target set.
pub struct IfeSystem {
    model: Model,
}

/// A coder-controller bound to the system it was loaded against.
pub struct IfeController {
    inner: CoderController,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IfeEntropy {
    /// Upper bound on the invariance entropy; infinity when Q is not invariant.
    pub ub: f64,
    /// Horizon attaining `ub`, 0 when infinite.
    pub tau: u32,
    pub exact: bool,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IfeRates {
    pub rate: f64,
    pub window_rate: f64,
    pub block_rate: f64,
    pub time_varying_rate: f64,
    pub admissible: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: IfeStatus, msg: impl Into<String>) -> IfeStatus {
    set_error(msg.into());
    status
}

fn status_of(e: &Error) -> IfeStatus {
    match e {
        Error::InvalidSystem(_) | Error::UnknownState(_) | Error::UnknownInput(_) | Error::UnknownName(_) | Error::EmptyTarget => {
            IfeStatus::InvalidModel
        }
        Error::NotControlledInvariant { .. } | Error::NotAdmissible(_) => IfeStatus::NotInvariant,
        Error::InvalidController(_) => IfeStatus::InvalidController,
        Error::SearchBudgetExceeded { .. } | Error::ExplosionGuard { .. } => IfeStatus::Budget,
        _ => IfeStatus::Domain,
    }
}

fn from_core(e: Error) -> IfeStatus {
    fail(status_of(&e), e.to_string())
}

/// Runs `f`, turning panics into [`IfeStatus::Panic`].
fn guard(f: impl FnOnce() -> Result<(), IfeStatus>) -> IfeStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IfeStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(IfeStatus::Panic, "internal panic"),
    }
}

/// # Safety
/// `s` must be null or a valid nul-terminated string.
unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, IfeStatus> {
    if s.is_null() {
        return Err(fail(IfeStatus::NullPointer, "null string argument"));
    }
    // SAFETY: non-null and nul-terminated per the caller contract.
    unsafe { CStr::from_ptr(s) }.to_str().map_err(|_| fail(IfeStatus::InvalidUtf8, "argument is not UTF-8"))
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), IfeStatus> {
    if p.is_null() {
        Err(fail(IfeStatus::NullPointer, format!("null {what}")))
    } else {
        Ok(())
    }
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ife_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ife_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a system file.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ife_system_from_json(json: *const c_char, out: *mut *mut IfeSystem) -> IfeStatus {
    guard(|| {
        non_null(out, "output pointer")?;
        // SAFETY: forwarded caller contract.
        let text = unsafe { read_str(json) }?;
        let file: SystemFile = serde_json::from_str(text).map_err(|e| fail(IfeStatus::Parse, e.to_string()))?;
        let model = Model::from_file(&file).map_err(from_core)?;
        // SAFETY: checked non-null.
        unsafe { *out = Box::into_raw(Box::new(IfeSystem { model })) };
        Ok(())
    })
}

/// # Safety
/// `sys` must be null or a handle from [`ife_system_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ife_system_free(sys: *mut IfeSystem) {
    if !sys.is_null() {
        // SAFETY: allocated by Box::into_raw in this library.
        drop(unsafe { Box::from_raw(sys) });
    }
}

/// # Safety
/// `sys` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ife_system_num_states(sys: *const IfeSystem) -> usize {
    // SAFETY: caller contract.
    unsafe { sys.as_ref() }.map_or(0, |s| s.model.sys.num_states())
}

/// # Safety
/// `sys` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ife_system_is_controlled_invariant(sys: *const IfeSystem, out: *mut bool) -> IfeStatus {
    guard(|| {
        non_null(out, "output pointer")?;
        // SAFETY: caller contract.
        let s = unsafe { sys.as_ref() }.ok_or_else(|| fail(IfeStatus::NullPointer, "null system"))?;
        // SAFETY: checked non-null.
        unsafe { *out = is_controlled_invariant(&s.model.sys, &s.model.q).invariant };
        Ok(())
    })
}

/// Upper bound on the invariance entropy over horizons `1..=tau_max`.
///
/// # Safety
/// `sys` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ife_entropy(sys: *const IfeSystem, tau_max: u32, out: *mut IfeEntropy) -> IfeStatus {
    guard(|| {
        non_null(out, "output pointer")?;
        // SAFETY: caller contract.
        let s = unsafe { sys.as_ref() }.ok_or_else(|| fail(IfeStatus::NullPointer, "null system"))?;
        if tau_max == 0 {
            return Err(fail(IfeStatus::Domain, "tau_max must be positive"));
        }
        let limits = EntropyLimits { tau_max: tau_max as usize, ..EntropyLimits::default() };
        let h = invariance_entropy_ub(&s.model.sys, &s.model.q, &limits).map_err(from_core)?;
        let result = match (&h.value, &h.report) {
            (Hinv::Finite { ub, .. }, Some(r)) => IfeEntropy { ub: ub.to_f64(), tau: r.ub_tau as u32, exact: h.exact },
            _ => IfeEntropy { ub: f64::INFINITY, tau: 0, exact: h.exact },
        };
        // SAFETY: checked non-null.
        unsafe { *out = result };
        Ok(())
    })
}

/// Parses a controller file against `sys`.
///
/// # Safety
/// `sys` must be a live handle, `json` a nul-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ife_controller_from_json(sys: *const IfeSystem, json: *const c_char, out: *mut *mut IfeController) -> IfeStatus {
    guard(|| {
        non_null(out, "output pointer")?;
        // SAFETY: caller contract.
        let s = unsafe { sys.as_ref() }.ok_or_else(|| fail(IfeStatus::NullPointer, "null system"))?;
        // SAFETY: caller contract.
        let text = unsafe { read_str(json) }?;
        let file: ControllerFile = serde_json::from_str(text).map_err(|e| fail(IfeStatus::Parse, e.to_string()))?;
        let inner = s.model.controller_from_file(&file).map_err(from_core)?;
        // SAFETY: checked non-null.
        unsafe { *out = Box::into_raw(Box::new(IfeController { inner })) };
        Ok(())
    })
}

/// # Safety
/// `ctrl` must be null or a handle from [`ife_controller_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ife_controller_free(ctrl: *mut IfeController) {
    if !ctrl.is_null() {
        // SAFETY: allocated by Box::into_raw in this library.
        drop(unsafe { Box::from_raw(ctrl) });
    }
}

/// Data rates of `ctrl` in closed loop with `sys`.
///
/// # Safety
/// Both handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ife_datarate(sys: *const IfeSystem, ctrl: *const IfeController, out: *mut IfeRates) -> IfeStatus {
    guard(|| {
        non_null(out, "output pointer")?;
        // SAFETY: caller contract.
        let s = unsafe { sys.as_ref() }.ok_or_else(|| fail(IfeStatus::NullPointer, "null system"))?;
        // SAFETY: caller contract.
        let h = unsafe { ctrl.as_ref() }.ok_or_else(|| fail(IfeStatus::NullPointer, "null controller"))?;
        let r = transmission_rate(&s.model.sys, &s.model.q, &h.inner, false).map_err(from_core)?;
        let tv = time_varying_rate(&h.inner, h.inner.memory());
        // SAFETY: checked non-null.
        unsafe {
            *out = IfeRates {
                rate: r.rate.to_f64(),
                window_rate: r.window_rate.to_f64(),
                block_rate: r.block_rate.to_f64(),
                time_varying_rate: tv.limit.to_f64(),
                admissible: r.admissible,
            }
        };
        Ok(())
    })
}

/// Entropy and static-rate lower bounds for an uncertain linear system.
/// Rationals are passed as strings such as `"1/2"` or `"0.75"`.
///
/// # Safety
/// String arguments must be nul-terminated; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn ife_linear_bound(
    n: u32,
    abs_det: *const c_char,
    mu_q: *const c_char,
    mu_w: *const c_char,
    out_entropy: *mut f64,
    out_static: *mut f64,
) -> IfeStatus {
    guard(|| {
        non_null(out_entropy, "output pointer")?;
        non_null(out_static, "output pointer")?;
        let rat = |p| -> Result<_, IfeStatus> {
            // SAFETY: forwarded caller contract.
            parse_rational(unsafe { read_str(p) }?).map_err(from_core)
        };
        let inp = LinearBoundInput::new(n, rat(abs_det)?, rat(mu_q)?, rat(mu_w)?).map_err(from_core)?;
        // SAFETY: checked non-null.
        unsafe {
            *out_entropy = entropy_lower_bound(&inp).to_f64();
            *out_static = static_rate_lower_bound(&inp).to_f64();
        }
        Ok(())
    })
}
