//! C interface to sno-scope.
//!
//! Every fallible call returns a [`SnoScopeStatus`]; on failure the message
//! is available from [`sno_scope_last_error`] on the same thread. Handles are
//! opaque and released with their matching `_free` function. Strings handed
//! out by the library are released with [`sno_scope_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sno_scope::catalog::SnoCatalog;
use sno_scope::filter::{run_pipeline, ClassifiedCorpus, FilterConfig, DEFAULT_GLOBAL_FLOOR_MS, DEFAULT_MIN_TESTS};
use sno_scope::ingest::{parse_ndjson_parallel, partition, SpeedTestSession, Strictness};
use sno_scope::profiling::{classify_orbit, percentile, ClassifierConfig, OrbitClass, StatsError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnoScopeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    InvalidArgument = 4,
    InsufficientData = 5,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnoScopeOrbitClass {
    Leo = 0,
    Meo = 1,
    Geo = 2,
    Mixed = 3,
    TerrestrialSuspect = 4,
}

impl From<OrbitClass> for SnoScopeOrbitClass {
    fn from(c: OrbitClass) -> Self {
        match c {
            OrbitClass::Leo => Self::Leo,
            OrbitClass::Meo => Self::Meo,
            OrbitClass::Geo => Self::Geo,
            OrbitClass::Mixed => Self::Mixed,
            OrbitClass::TerrestrialSuspect => Self::TerrestrialSuspect,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnoScopeOrbitVerdict {
    pub orbit: SnoScopeOrbitClass,
    pub confidence: f64,
    pub median_ms: f64,
}

/// Relaxed/strict filter knobs. Fill with [`sno_scope_filter_params_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnoScopeFilterParams {
    pub min_tests: usize,
    pub global_floor_ms: f64,
    /// Stop at the first malformed record instead of skipping it.
    pub strict_parsing: bool,
}

/// Operator catalog.
pub struct SnoScopeCatalog(SnoCatalog);

/// Result of classifying a speed-test corpus.
pub struct SnoScopeClassification {
    corpus: ClassifiedCorpus,
    n_sessions: usize,
    n_malformed: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: SnoScopeStatus, msg: impl Into<String>) -> SnoScopeStatus {
    set_error(msg);
    status
}

/// Runs `f`, converting a panic into `SNO_SCOPE_STATUS_PANIC`.
fn guard(f: impl FnOnce() -> SnoScopeStatus) -> SnoScopeStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(SnoScopeStatus::Panic, "internal panic"))
}

fn stats_status(e: StatsError) -> SnoScopeStatus {
    let status = match e {
        StatsError::Empty | StatsError::InsufficientData { .. } | StatsError::Degenerate => {
            SnoScopeStatus::InsufficientData
        }
        _ => SnoScopeStatus::InvalidArgument,
    };
    fail(status, e.to_string())
}

/// # Safety
/// `s` must be null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, SnoScopeStatus> {
    if s.is_null() {
        return Err(fail(SnoScopeStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(SnoScopeStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// # Safety
/// `data` must be null only when `n` is 0; otherwise it must point to `n`
/// readable doubles.
unsafe fn slice_arg<'a>(data: *const f64, n: usize) -> Result<&'a [f64], SnoScopeStatus> {
    if n == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(fail(SnoScopeStatus::NullPointer, "samples is null"));
    }
    Ok(std::slice::from_raw_parts(data, n))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into the library from this thread.
#[no_mangle]
pub extern "C" fn sno_scope_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sno_scope_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sno_scope_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Quantile `q` in [0, 1] by linear interpolation at rank (n-1)q.
///
/// # Safety
/// `samples` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sno_scope_percentile(samples: *const f64, n: usize, q: f64, out: *mut f64) -> SnoScopeStatus {
    guard(|| {
        if out.is_null() {
            return fail(SnoScopeStatus::NullPointer, "out is null");
        }
        let xs = match slice_arg(samples, n) {
            Ok(x) => x,
            Err(s) => return s,
        };
        match percentile(xs, q) {
            Ok(v) => {
                *out = v;
                SnoScopeStatus::Ok
            }
            Err(e) => stats_status(e),
        }
    })
}

/// Orbit verdict for access latencies under the default classifier settings.
///
/// # Safety
/// `latencies` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sno_scope_classify_orbit(
    latencies: *const f64,
    n: usize,
    out: *mut SnoScopeOrbitVerdict,
) -> SnoScopeStatus {
    guard(|| {
        if out.is_null() {
            return fail(SnoScopeStatus::NullPointer, "out is null");
        }
        let xs = match slice_arg(latencies, n) {
            Ok(x) => x,
            Err(s) => return s,
        };
        match classify_orbit(xs, &ClassifierConfig::default()) {
            Ok(v) => {
                *out = SnoScopeOrbitVerdict {
                    orbit: v.orbit.into(),
                    confidence: v.confidence,
                    median_ms: v.median_ms,
                };
                SnoScopeStatus::Ok
            }
            Err(e) => stats_status(e),
        }
    })
}

/// The catalog shipped with the library. Never null.
#[no_mangle]
pub extern "C" fn sno_scope_catalog_bundled() -> *mut SnoScopeCatalog {
    Box::into_raw(Box::new(SnoScopeCatalog(SnoCatalog::bundled())))
}

/// Parses a catalog from its JSON form.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sno_scope_catalog_from_json(
    json: *const c_char,
    out: *mut *mut SnoScopeCatalog,
) -> SnoScopeStatus {
    guard(|| {
        if out.is_null() {
            return fail(SnoScopeStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let text = match str_arg(json, "json") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match SnoCatalog::from_json_reader(text.as_bytes()) {
            Ok(c) => {
                *out = Box::into_raw(Box::new(SnoScopeCatalog(c)));
                SnoScopeStatus::Ok
            }
            Err(e) => fail(SnoScopeStatus::Parse, e.to_string()),
        }
    })
}

/// Number of operators in the catalog; 0 for null.
///
/// # Safety
/// `catalog` must be null or a live catalog handle.
#[no_mangle]
pub unsafe extern "C" fn sno_scope_catalog_len(catalog: *const SnoScopeCatalog) -> usize {
    catalog.as_ref().map_or(0, |c| c.0.entries().len())
}

/// # Safety
/// `catalog` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sno_scope_catalog_free(catalog: *mut SnoScopeCatalog) {
    if !catalog.is_null() {
        drop(Box::from_raw(catalog));
    }
}

#[no_mangle]
pub extern "C" fn sno_scope_filter_params_default() -> SnoScopeFilterParams {
    SnoScopeFilterParams {
        min_tests: DEFAULT_MIN_TESTS,
        global_floor_ms: DEFAULT_GLOBAL_FLOOR_MS,
        strict_parsing: false,
    }
}

/// Classifies speed-test sessions given as NDJSON text. `params` may be
/// null for defaults.
///
/// # Safety
/// `catalog` must be a live catalog handle, `ndjson` a NUL-terminated
/// string, `params` null or readable, and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sno_scope_classify_ndjson(
    catalog: *const SnoScopeCatalog,
    ndjson: *const c_char,
    params: *const SnoScopeFilterParams,
    out: *mut *mut SnoScopeClassification,
) -> SnoScopeStatus {
    guard(|| {
        if out.is_null() {
            return fail(SnoScopeStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let Some(catalog) = catalog.as_ref() else {
            return fail(SnoScopeStatus::NullPointer, "catalog is null");
        };
        let text = match str_arg(ndjson, "ndjson") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let p = params
            .as_ref()
            .copied()
            .unwrap_or_else(|| sno_scope_filter_params_default());
        let cfg = FilterConfig {
            min_tests: p.min_tests,
            global_floor_ms: p.global_floor_ms,
            ..FilterConfig::default()
        };
        if let Err(e) = cfg.validate() {
            return fail(SnoScopeStatus::InvalidArgument, e);
        }
        let strictness = if p.strict_parsing {
            Strictness::Strict
        } else {
            Strictness::Lenient
        };
        let (sessions, errors): (Vec<SpeedTestSession>, _) = partition(parse_ndjson_parallel(text, strictness));
        if p.strict_parsing {
            if let Some(e) = errors.first() {
                return fail(SnoScopeStatus::Parse, e.to_string());
            }
        }
        let corpus = run_pipeline(&sessions, &catalog.0, &cfg);
        *out = Box::into_raw(Box::new(SnoScopeClassification {
            corpus,
            n_sessions: sessions.len(),
            n_malformed: errors.len(),
        }));
        SnoScopeStatus::Ok
    })
}

/// Sessions parsed from the input; 0 for null.
///
/// # Safety
/// `c` must be null or a live classification handle.
#[no_mangle]
pub unsafe extern "C" fn sno_scope_classification_session_count(c: *const SnoScopeClassification) -> usize {
    c.as_ref().map_or(0, |c| c.n_sessions)
}

/// Input lines skipped as malformed; 0 for null.
///
/// # Safety
/// `c` must be null or a live classification handle.
#[no_mangle]
pub unsafe extern "C" fn sno_scope_classification_malformed_count(c: *const SnoScopeClassification) -> usize {
    c.as_ref().map_or(0, |c| c.n_malformed)
}

/// Sessions attributed to an operator; 0 for null.
///
/// # Safety
/// `c` must be null or a live classification handle.
#[no_mangle]
pub unsafe extern "C" fn sno_scope_classification_accepted_count(c: *const SnoScopeClassification) -> usize {
    c.as_ref().map_or(0, |c| c.corpus.accepted_count())
}

/// Per-operator summary CSV. Free with `sno_scope_string_free`; null for a
/// null handle.
///
/// # Safety
/// `c` must be null or a live classification handle.
#[no_mangle]
pub unsafe extern "C" fn sno_scope_classification_summary_csv(c: *const SnoScopeClassification) -> *mut c_char {
    c.as_ref()
        .map_or(ptr::null_mut(), |c| into_c_string(c.corpus.summary_csv()))
}

/// One disposition per session as NDJSON. Free with
/// `sno_scope_string_free`; null for a null handle.
///
/// # Safety
/// `c` must be null or a live classification handle.
#[no_mangle]
pub unsafe extern "C" fn sno_scope_classification_dispositions_ndjson(c: *const SnoScopeClassification) -> *mut c_char {
    c.as_ref()
        .map_or(ptr::null_mut(), |c| into_c_string(c.corpus.dispositions_ndjson()))
}

/// # Safety
/// `c` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sno_scope_classification_free(c: *mut SnoScopeClassification) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}
