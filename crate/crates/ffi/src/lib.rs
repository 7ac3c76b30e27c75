//! C interface to `intervol`.
//!
//! Every call returns an [`IvStatus`]. On failure the message is kept per
//! thread and can be copied out with [`iv_last_error_message`]. Handles are
//! opaque and must be released with their matching `_free` function.
//!
//! # Safety
//!
//! Pointer arguments are either null, which is reported as
//! `NullPointer`, or valid for the documented number of elements. Handles
//! must come from this library and must not be used after they are freed.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use intervol::dist::{interval_logprob, skellam_logpmf, SkellamParams};
use intervol::dynamics::{loglik, ModelKind, ModelSpec, ParamVector};
use intervol::estimate::{fit_day, BoundRegime, FitOptions, FitResult};
use intervol::pipeline::ChangeSeries;
use intervol::sim::{simulate, SimSpec};
use intervol::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    InsufficientData = 4,
    ScoreUndefined = 5,
    FilterDiverged = 6,
    Io = 7,
    Parse = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// A day of integer price changes.
pub struct IvSeries {
    inner: ChangeSeries,
}

/// Estimates for one model on one day.
pub struct IvFit {
    inner: FitResult,
    names: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(e: &Error) -> IvStatus {
    match e {
        Error::Domain(_) => IvStatus::Domain,
        Error::ScoreUndefined { .. } => IvStatus::ScoreUndefined,
        Error::FilterDiverged { .. } => IvStatus::FilterDiverged,
        Error::InsufficientData(_) => IvStatus::InsufficientData,
        Error::Io { .. } => IvStatus::Io,
        Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => IvStatus::Parse,
    }
}

struct Fail(IvStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> IvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            IvStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            IvStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(IvStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(IvStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

fn model(name: &str) -> Result<ModelKind, Fail> {
    name.parse().map_err(|e: Error| Fail(IvStatus::InvalidArgument, e.to_string()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn iv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf`.
///
/// `required` receives the size including the terminating NUL. Returns
/// `BufferTooSmall` when `len` is short; the copy is then truncated.
#[no_mangle]
pub unsafe extern "C" fn iv_last_error_message(buf: *mut c_char, len: usize, required: *mut usize) -> IvStatus {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes_with_nul();
        if let Some(r) = required.as_mut() {
            *r = bytes.len();
        }
        if buf.is_null() || len == 0 {
            return if buf.is_null() && len == 0 { IvStatus::Ok } else { IvStatus::NullPointer };
        }
        let n = bytes.len().min(len);
        ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
        *buf.add(n - 1) = 0;
        if n < bytes.len() {
            IvStatus::BufferTooSmall
        } else {
            IvStatus::Ok
        }
    })
}

/// Creates a series of `n` changes stamped at `frequency`, `2 * frequency`, ...
#[no_mangle]
pub unsafe extern "C" fn iv_series_new(
    day: *const c_char,
    frequency: f64,
    changes: *const i64,
    n: usize,
    out: *mut *mut IvSeries,
) -> IvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let day = str_arg(day, "day")?;
        let changes = slice_arg(changes, n, "changes")?;
        if !(frequency.is_finite() && frequency > 0.0) {
            return Err(Fail(IvStatus::InvalidArgument, "frequency must be positive".into()));
        }
        let inner = ChangeSeries::regular(day, frequency, changes.to_vec());
        *out = Box::into_raw(Box::new(IvSeries { inner }));
        Ok(())
    })
}

/// # Safety
/// `series` is null or a live handle from `iv_series_new` / `iv_simulate`.
#[no_mangle]
pub unsafe extern "C" fn iv_series_free(series: *mut IvSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

#[no_mangle]
pub unsafe extern "C" fn iv_series_len(series: *const IvSeries, out: *mut usize) -> IvStatus {
    guard(|| {
        *out_arg(out, "out")? = handle(series, "series")?.inner.len();
        Ok(())
    })
}

/// Copies up to `len` changes into `buf`.
#[no_mangle]
pub unsafe extern "C" fn iv_series_changes(series: *const IvSeries, buf: *mut i64, len: usize) -> IvStatus {
    guard(|| {
        let s = handle(series, "series")?;
        if len < s.inner.len() {
            return Err(Fail(IvStatus::BufferTooSmall, format!("need {} slots", s.inner.len())));
        }
        if !s.inner.changes.is_empty() {
            if buf.is_null() {
                return Err(null("buf"));
            }
            ptr::copy_nonoverlapping(s.inner.changes.as_ptr(), buf, s.inner.len());
        }
        Ok(())
    })
}

/// Log probability that a normal (`nu <= 0`) or Student t variable rounds to `k`.
#[no_mangle]
pub unsafe extern "C" fn iv_interval_logprob(k: i64, mu: f64, sigma2: f64, nu: f64, out: *mut f64) -> IvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = interval_logprob(k, mu, sigma2, (nu > 0.0).then_some(nu))?;
        Ok(())
    })
}

/// Skellam log pmf parameterized by mean and variance.
#[no_mangle]
pub unsafe extern "C" fn iv_skellam_logpmf(k: i64, mu: f64, sigma2: f64, out: *mut f64) -> IvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = skellam_logpmf(k, &SkellamParams::new(mu, sigma2)?)?;
        Ok(())
    })
}

/// Average log-likelihood of `series` under `model` with the given parameters.
#[no_mangle]
pub unsafe extern "C" fn iv_loglik(
    series: *const IvSeries,
    model_name: *const c_char,
    params: *const f64,
    n_params: usize,
    out: *mut f64,
) -> IvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let s = handle(series, "series")?;
        let kind = model(str_arg(model_name, "model")?)?;
        let pv = ParamVector::new(kind, slice_arg(params, n_params, "params")?.to_vec())?;
        *out = loglik(&s.inner, &ModelSpec::new(kind), &pv, None)?.avg;
        Ok(())
    })
}

/// Fits `model` to one day. `regime` may be null for the unbounded regime.
#[no_mangle]
pub unsafe extern "C" fn iv_fit(
    series: *const IvSeries,
    model_name: *const c_char,
    regime: *const c_char,
    out: *mut *mut IvFit,
) -> IvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let s = handle(series, "series")?;
        let kind = model(str_arg(model_name, "model")?)?;
        let regime =
            if regime.is_null() { BoundRegime::default() } else { BoundRegime::by_name(str_arg(regime, "regime")?)? };
        let inner = fit_day(&s.inner, &ModelSpec::new(kind), &regime, None, &FitOptions::default())?;
        let names = inner.params.names.iter().map(|n| CString::new(n.as_str()).unwrap_or_default()).collect();
        *out = Box::into_raw(Box::new(IvFit { inner, names }));
        Ok(())
    })
}

/// # Safety
/// `fit` is null or a live handle from `iv_fit`.
#[no_mangle]
pub unsafe extern "C" fn iv_fit_free(fit: *mut IvFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

#[no_mangle]
pub unsafe extern "C" fn iv_fit_param_count(fit: *const IvFit, out: *mut usize) -> IvStatus {
    guard(|| {
        *out_arg(out, "out")? = handle(fit, "fit")?.inner.params.values.len();
        Ok(())
    })
}

/// Copies the estimates into `buf`, which must hold the parameter count.
#[no_mangle]
pub unsafe extern "C" fn iv_fit_params(fit: *const IvFit, buf: *mut f64, len: usize) -> IvStatus {
    guard(|| {
        let v = &handle(fit, "fit")?.inner.params.values;
        if len < v.len() {
            return Err(Fail(IvStatus::BufferTooSmall, format!("need {} slots", v.len())));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
        Ok(())
    })
}

/// Name of parameter `i`; the string lives as long as the fit handle.
#[no_mangle]
pub unsafe extern "C" fn iv_fit_param_name(fit: *const IvFit, i: usize, out: *mut *const c_char) -> IvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let f = handle(fit, "fit")?;
        let name = f
            .names
            .get(i)
            .ok_or_else(|| Fail(IvStatus::InvalidArgument, format!("parameter index {i} out of range")))?;
        *out = name.as_ptr();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn iv_fit_loglik_avg(fit: *const IvFit, out: *mut f64) -> IvStatus {
    guard(|| {
        *out_arg(out, "out")? = handle(fit, "fit")?.inner.loglik_avg;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn iv_fit_converged(fit: *const IvFit, out: *mut bool) -> IvStatus {
    guard(|| {
        *out_arg(out, "out")? = handle(fit, "fit")?.inner.converged;
        Ok(())
    })
}

/// The fit serialized as JSON; release with [`iv_string_free`].
#[no_mangle]
pub unsafe extern "C" fn iv_fit_to_json(fit: *const IvFit, out: *mut *mut c_char) -> IvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let text = serde_json::to_string(&handle(fit, "fit")?.inner).map_err(Error::from)?;
        *out = CString::new(text).map_err(|e| Fail(IvStatus::Parse, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` is null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn iv_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Simulates one day of `n` changes from `model`.
#[no_mangle]
pub unsafe extern "C" fn iv_simulate(
    model_name: *const c_char,
    params: *const f64,
    n_params: usize,
    n: usize,
    seed: u64,
    out: *mut *mut IvSeries,
) -> IvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let kind = model(str_arg(model_name, "model")?)?;
        let pv = ParamVector::new(kind, slice_arg(params, n_params, "params")?.to_vec())?;
        let (mut days, _) = simulate(&SimSpec::new(ModelSpec::new(kind), pv, n, 1, seed))?;
        let inner = days.pop().ok_or_else(|| Fail(IvStatus::InsufficientData, "nothing simulated".into()))?;
        *out = Box::into_raw(Box::new(IvSeries { inner }));
        Ok(())
    })
}
