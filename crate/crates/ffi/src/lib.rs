//! C ABI over the `lppls` library.
//!
//! Every fallible function returns an [`LpplsStatus`]; on failure the message
//! is available from [`lppls_last_error_message`] on the same thread. Series
//! and crash lists are opaque handles released with their `_free` function.
//! Panics are caught at the boundary and reported as `LPPLS_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use lppls::crashes::{detect_crashes, CrashConfig, CrashEvent};
use lppls::error::ErrorKind;
use lppls::indicator::{confidence_at, IndicatorConfig};
use lppls::model::{self, LpplsParams};
use lppls::optimizer::{fit_window, CmaesConfig, SearchBounds};
use lppls::qualify::{qualify, FilterConfig};
use lppls::series::{load_csv, CsvOptions, FitWindow, PriceSeries, TimescaleLevel, WindowSchedule};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpplsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Data = 3,
    Config = 4,
    NoFit = 5,
    Panic = 6,
}

/// A price series on a regular grid.
pub struct LpplsSeries(PriceSeries);

/// Result of crash detection.
pub struct LpplsCrashList(Vec<CrashEvent>);

/// The seven LPPLS parameters; `tc` is relative to the window start, in samples.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LpplsModelParams {
    pub tc: f64,
    pub m: f64,
    pub omega: f64,
    pub a: f64,
    pub b: f64,
    pub c1: f64,
    pub c2: f64,
}

impl From<LpplsParams> for LpplsModelParams {
    fn from(p: LpplsParams) -> Self {
        Self {
            tc: p.tc,
            m: p.m,
            omega: p.omega,
            a: p.a,
            b: p.b,
            c1: p.c1,
            c2: p.c2,
        }
    }
}

impl From<LpplsModelParams> for LpplsParams {
    fn from(p: LpplsModelParams) -> Self {
        Self {
            tc: p.tc,
            m: p.m,
            omega: p.omega,
            a: p.a,
            b: p.b,
            c1: p.c1,
            c2: p.c2,
        }
    }
}

/// One calibrated window and its filter outcome.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LpplsFitResult {
    pub params: LpplsModelParams,
    pub ssr: f64,
    pub t1_index: usize,
    pub t2_index: usize,
    pub converged: bool,
    /// All filters passed.
    pub qualified: bool,
    pub damping: f64,
    pub half_periods: f64,
    pub max_rel_err: f64,
    /// NaN when the spectral test was skipped.
    pub lomb_p: f64,
}

/// Confidence indicator at one endpoint.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LpplsConfidence {
    pub n_windows: usize,
    pub n_pass_pos: usize,
    pub n_pass_neg: usize,
    pub ci_pos: f64,
    pub ci_neg: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LpplsCrash {
    pub peak_time: i64,
    pub peak_price: f64,
    pub end_time: i64,
    pub end_price: f64,
    pub duration_days: i64,
    pub size: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: LpplsStatus, msg: impl AsRef<str>) -> LpplsStatus {
    set_error(msg.as_ref());
    status
}

fn from_error(e: lppls::Error) -> LpplsStatus {
    let status = match e.kind() {
        ErrorKind::Usage => LpplsStatus::InvalidArgument,
        ErrorKind::Data => LpplsStatus::Data,
        ErrorKind::Config => LpplsStatus::Config,
        ErrorKind::NoFit => LpplsStatus::NoFit,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> LpplsStatus) -> LpplsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => {
            if status == LpplsStatus::Ok {
                set_error("");
            }
            status
        }
        Err(_) => fail(LpplsStatus::Panic, "internal panic"),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lppls_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn lppls_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a series from `len` strictly increasing epoch-second timestamps and
/// positive prices sampled every `spacing_secs` seconds.
///
/// # Safety
/// `timestamps` and `prices` must point to `len` readable values and `out` to
/// writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn lppls_series_new(
    timestamps: *const i64,
    prices: *const f64,
    len: usize,
    spacing_secs: i64,
    out: *mut *mut LpplsSeries,
) -> LpplsStatus {
    guard(|| {
        if timestamps.is_null() || prices.is_null() || out.is_null() {
            return fail(LpplsStatus::NullPointer, "null pointer argument");
        }
        let ts = std::slice::from_raw_parts(timestamps, len).to_vec();
        let ps = std::slice::from_raw_parts(prices, len).to_vec();
        let series = TimescaleLevel::from_spacing(spacing_secs).and_then(|level| PriceSeries::new(ts, ps, level));
        match series {
            Ok(s) => {
                *out = Box::into_raw(Box::new(LpplsSeries(s)));
                LpplsStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}

/// Loads a `timestamp,price` CSV file; the sampling level is inferred.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lppls_series_load_csv(path: *const c_char, out: *mut *mut LpplsSeries) -> LpplsStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(LpplsStatus::NullPointer, "null pointer argument");
        }
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(LpplsStatus::InvalidArgument, "path is not valid UTF-8");
        };
        match load_csv(path, &CsvOptions::default()) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(LpplsSeries(s)));
                LpplsStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}

/// Number of samples; zero for a null handle.
///
/// # Safety
/// `series` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lppls_series_len(series: *const LpplsSeries) -> usize {
    series.as_ref().map_or(0, |s| s.0.len())
}

/// Releases a series handle. Null is ignored.
///
/// # Safety
/// `series` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lppls_series_free(series: *mut LpplsSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// Model log-price at window time `t`.
///
/// # Safety
/// `params` must be readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lppls_value(t: f64, params: *const LpplsModelParams, out: *mut f64) -> LpplsStatus {
    guard(|| {
        let (Some(p), false) = (params.as_ref(), out.is_null()) else {
            return fail(LpplsStatus::NullPointer, "null pointer argument");
        };
        match model::lppls_value(t, &(*p).into()) {
            Ok(v) => {
                *out = v;
                LpplsStatus::Ok
            }
            Err(e) => fail(LpplsStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Least-squares amplitudes for fixed `(tc, m, omega)`.
///
/// # Safety
/// `log_prices` and `times` must point to `len` readable values; `out` and
/// `ssr` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lppls_solve_linear(
    log_prices: *const f64,
    times: *const f64,
    len: usize,
    tc: f64,
    m: f64,
    omega: f64,
    out: *mut LpplsModelParams,
    ssr: *mut f64,
) -> LpplsStatus {
    guard(|| {
        if log_prices.is_null() || times.is_null() || out.is_null() || ssr.is_null() {
            return fail(LpplsStatus::NullPointer, "null pointer argument");
        }
        let y = std::slice::from_raw_parts(log_prices, len);
        let t = std::slice::from_raw_parts(times, len);
        match model::solve_linear(y, t, tc, m, omega) {
            Ok(sol) => {
                *out = sol.params(tc, m, omega).into();
                *ssr = sol.ssr;
                LpplsStatus::Ok
            }
            Err(e) => fail(LpplsStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Calibrates window `[t1_index, t2_index]` with default settings and the given seed.
///
/// # Safety
/// `series` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lppls_fit_window(
    series: *const LpplsSeries,
    t1_index: usize,
    t2_index: usize,
    seed: u64,
    out: *mut LpplsFitResult,
) -> LpplsStatus {
    guard(|| {
        let (Some(s), false) = (series.as_ref(), out.is_null()) else {
            return fail(LpplsStatus::NullPointer, "null pointer argument");
        };
        if t1_index > t2_index {
            return fail(LpplsStatus::InvalidArgument, "t1_index after t2_index");
        }
        let window = match FitWindow::new(t1_index, t2_index) {
            Ok(w) => w,
            Err(e) => return from_error(e.into()),
        };
        let cmaes = CmaesConfig {
            seed,
            ..Default::default()
        };
        let fit = match fit_window(&s.0, &window, &SearchBounds::default(), &cmaes) {
            Ok(f) => f,
            Err(e) => return from_error(e.into()),
        };
        let v = qualify(&fit, &s.0, &FilterConfig::default());
        *out = LpplsFitResult {
            params: fit.params.into(),
            ssr: fit.ssr,
            t1_index: fit.window.t1_index,
            t2_index: fit.window.t2_index,
            converged: fit.converged,
            qualified: v.pass,
            damping: v.damping.unwrap_or(f64::NAN),
            half_periods: v.half_periods.unwrap_or(f64::NAN),
            max_rel_err: v.max_rel_err.unwrap_or(f64::NAN),
            lomb_p: v.lomb_p.unwrap_or(f64::NAN),
        };
        LpplsStatus::Ok
    })
}

/// Confidence indicator at `t2_index` over window lengths
/// `min_length..=max_length` in steps of `step`.
///
/// # Safety
/// `series` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lppls_confidence_at(
    series: *const LpplsSeries,
    t2_index: usize,
    min_length: usize,
    max_length: usize,
    step: usize,
    seed: u64,
    out: *mut LpplsConfidence,
) -> LpplsStatus {
    guard(|| {
        let (Some(s), false) = (series.as_ref(), out.is_null()) else {
            return fail(LpplsStatus::NullPointer, "null pointer argument");
        };
        let schedule = match WindowSchedule::new(min_length, max_length, step) {
            Ok(sch) => sch,
            Err(e) => return from_error(e.into()),
        };
        let config = IndicatorConfig {
            seed,
            ..Default::default()
        };
        match confidence_at(&s.0, t2_index, &schedule, &config) {
            Ok(r) => {
                *out = LpplsConfidence {
                    n_windows: r.n_windows,
                    n_pass_pos: r.n_pass_pos,
                    n_pass_neg: r.n_pass_neg,
                    ci_pos: r.ci_pos,
                    ci_neg: r.ci_neg,
                };
                LpplsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Detects crashes larger than `threshold` in a daily series.
///
/// # Safety
/// `series` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lppls_detect_crashes(
    series: *const LpplsSeries,
    threshold: f64,
    out: *mut *mut LpplsCrashList,
) -> LpplsStatus {
    guard(|| {
        let (Some(s), false) = (series.as_ref(), out.is_null()) else {
            return fail(LpplsStatus::NullPointer, "null pointer argument");
        };
        let config = CrashConfig {
            threshold,
            ..Default::default()
        };
        match detect_crashes(&s.0, &config) {
            Ok(events) => {
                *out = Box::into_raw(Box::new(LpplsCrashList(events)));
                LpplsStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}

/// Number of crashes in the list; zero for a null handle.
///
/// # Safety
/// `list` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lppls_crash_list_len(list: *const LpplsCrashList) -> usize {
    list.as_ref().map_or(0, |l| l.0.len())
}

/// Copies crash `index` into `out`.
///
/// # Safety
/// `list` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lppls_crash_list_get(
    list: *const LpplsCrashList,
    index: usize,
    out: *mut LpplsCrash,
) -> LpplsStatus {
    guard(|| {
        let (Some(l), false) = (list.as_ref(), out.is_null()) else {
            return fail(LpplsStatus::NullPointer, "null pointer argument");
        };
        let Some(e) = l.0.get(index) else {
            return fail(
                LpplsStatus::InvalidArgument,
                format!("index {index} out of range for {} crashes", l.0.len()),
            );
        };
        *out = LpplsCrash {
            peak_time: e.peak_time,
            peak_price: e.peak_price,
            end_time: e.end_time,
            end_price: e.end_price,
            duration_days: e.duration_days,
            size: e.size,
        };
        LpplsStatus::Ok
    })
}

/// Releases a crash list. Null is ignored.
///
/// # Safety
/// `list` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lppls_crash_list_free(list: *mut LpplsCrashList) {
    if !list.is_null() {
        drop(Box::from_raw(list));
    }
}
