//! C ABI for the conjlab laboratory.
//!
//! The surface is handle-based: `conjlab_run_new` executes a scenario and
//! returns an opaque `ConjlabRun`; accessors read conjugate points, verdict
//! classifications and the JSON report out of it. Every function returns a
//! status code; `conjlab_last_error_message` holds the message of the most
//! recent failure on the calling thread. Strings returned by the library are
//! freed with `conjlab_string_free`, handles with `conjlab_run_free`.

use std::cell::RefCell;
use std::ffi::{c_char, c_double, c_uint, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use conjlab::bifurcation::{Classification, SignVariant};
use conjlab::scenario::{self, RunArtifacts};

/// Status codes of every C-ABI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConjlabStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    UnknownScenario = 3,
    ParseError = 4,
    NumericsError = 5,
    IoError = 6,
    IndexOutOfRange = 7,
    Panic = 8,
}

/// Opaque handle to a completed scenario run.
pub struct ConjlabRun {
    artifacts: RunArtifacts,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(msg).ok();
    });
}

fn status_of(err: &conjlab::Error) -> ConjlabStatus {
    use conjlab::Error::*;
    match err {
        UnknownScenario { .. } => ConjlabStatus::UnknownScenario,
        Parse { .. } | InvalidParameter { .. } => ConjlabStatus::ParseError,
        Io { .. } => ConjlabStatus::IoError,
        _ => ConjlabStatus::NumericsError,
    }
}

fn guarded<F: FnOnce() -> ConjlabStatus>(f: F) -> ConjlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            ConjlabStatus::Panic
        }
    }
}

unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Result<&'a str, ConjlabStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(ConjlabStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        ConjlabStatus::InvalidUtf8
    })
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn conjlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the most recent error on this thread, or NULL. Do not free;
/// the pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn conjlab_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Runs a scenario (built-in id or scenario-file path).
///
/// `sign_variant` selects the primary typesetting: "derived", "printed", or
/// NULL for the default. `tol` maps onto the integrator tolerances when
/// positive; pass 0 or a negative value for the defaults. On success the new
/// handle is stored in `out_run`.
///
/// # Safety
/// `id` must be a valid NUL-terminated string and `out_run` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn conjlab_run_new(
    id: *const c_char,
    sign_variant: *const c_char,
    tol: c_double,
    out_run: *mut *mut ConjlabRun,
) -> ConjlabStatus {
    guarded(|| {
        if out_run.is_null() {
            set_error("out_run must not be null");
            return ConjlabStatus::NullArgument;
        }
        let id = match cstr_arg(id) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let mut sc = match scenario::resolve(id) {
            Ok(sc) => sc,
            Err(e) => {
                set_error(e.to_string());
                return status_of(&e);
            }
        };
        if !sign_variant.is_null() {
            let variant = match cstr_arg(sign_variant) {
                Ok(s) => s,
                Err(status) => return status,
            };
            match variant {
                "derived" | "both" | "" => sc.sign_variant = SignVariant::Derived,
                "printed" => sc.sign_variant = SignVariant::Printed,
                other => {
                    set_error(format!(
                        "sign_variant must be 'derived' or 'printed', got '{other}'"
                    ));
                    return ConjlabStatus::ParseError;
                }
            }
        }
        if tol > 0.0 {
            if let Err(e) = scenario::apply_overrides(&mut sc, &[format!("tol={tol}")]) {
                set_error(e.to_string());
                return status_of(&e);
            }
        }
        match scenario::run_scenario(&sc) {
            Ok(artifacts) => {
                *out_run = Box::into_raw(Box::new(ConjlabRun { artifacts }));
                ConjlabStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Frees a run handle. NULL is a no-op.
///
/// # Safety
/// `run` must come from `conjlab_run_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn conjlab_run_free(run: *mut ConjlabRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Copies the JSON report into a newly allocated string (free with
/// `conjlab_string_free`).
///
/// # Safety
/// `run` must be a live handle and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn conjlab_run_report_json(
    run: *const ConjlabRun,
    out_json: *mut *mut c_char,
) -> ConjlabStatus {
    guarded(|| {
        if run.is_null() || out_json.is_null() {
            set_error("null argument");
            return ConjlabStatus::NullArgument;
        }
        let json = (*run).artifacts.report.to_json();
        match CString::new(json) {
            Ok(s) => {
                *out_json = s.into_raw();
                ConjlabStatus::Ok
            }
            Err(_) => {
                set_error("report contained an interior NUL byte");
                ConjlabStatus::Panic
            }
        }
    })
}

/// Frees a string returned by this library. NULL is a no-op.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn conjlab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Number of conjugate points in the run's primary picture.
///
/// # Safety
/// `run` must be a live handle and `out_count` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn conjlab_run_conjugate_count(
    run: *const ConjlabRun,
    out_count: *mut usize,
) -> ConjlabStatus {
    guarded(|| {
        if run.is_null() || out_count.is_null() {
            set_error("null argument");
            return ConjlabStatus::NullArgument;
        }
        *out_count = (*run).artifacts.report.conjugate_points.len();
        ConjlabStatus::Ok
    })
}

/// Reads one conjugate point: parameter, kernel multiplicity and position.
/// Output pointers may be NULL to skip a field; `out_position` must have room
/// for three doubles.
///
/// # Safety
/// `run` must be a live handle; non-NULL out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn conjlab_run_conjugate(
    run: *const ConjlabRun,
    index: usize,
    out_t_star: *mut c_double,
    out_multiplicity: *mut c_uint,
    out_position: *mut c_double,
) -> ConjlabStatus {
    guarded(|| {
        if run.is_null() {
            set_error("null argument");
            return ConjlabStatus::NullArgument;
        }
        let points = &(*run).artifacts.report.conjugate_points;
        let Some(p) = points.get(index) else {
            set_error(format!(
                "conjugate index {index} out of range ({} points)",
                points.len()
            ));
            return ConjlabStatus::IndexOutOfRange;
        };
        if !out_t_star.is_null() {
            *out_t_star = p.t_star;
        }
        if !out_multiplicity.is_null() {
            *out_multiplicity = p.multiplicity as c_uint;
        }
        if !out_position.is_null() {
            for i in 0..3 {
                *out_position.add(i) = p.position[i];
            }
        }
        ConjlabStatus::Ok
    })
}

/// Verdict classification of the primary sign variant.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConjlabClassification {
    Bifurcating = 0,
    CertifiedNonBifurcating = 1,
    Undecided = 2,
}

/// Classification of the `index`-th verdict item of the primary variant.
///
/// # Safety
/// `run` must be a live handle and `out_classification` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn conjlab_run_classification(
    run: *const ConjlabRun,
    index: usize,
    out_classification: *mut ConjlabClassification,
) -> ConjlabStatus {
    guarded(|| {
        if run.is_null() || out_classification.is_null() {
            set_error("null argument");
            return ConjlabStatus::NullArgument;
        }
        let report = &(*run).artifacts.report;
        let Some(verdict) = report.verdicts.first() else {
            set_error("run has no verdicts");
            return ConjlabStatus::IndexOutOfRange;
        };
        let Some(item) = verdict.items.get(index) else {
            set_error(format!(
                "verdict index {index} out of range ({} items)",
                verdict.items.len()
            ));
            return ConjlabStatus::IndexOutOfRange;
        };
        *out_classification = match item.classification {
            Classification::Bifurcating => ConjlabClassification::Bifurcating,
            Classification::CertifiedNonBifurcating => {
                ConjlabClassification::CertifiedNonBifurcating
            }
            Classification::Undecided => ConjlabClassification::Undecided,
        };
        ConjlabStatus::Ok
    })
}

/// Writes the report files into a directory: `format` is "json" or
/// "csv-bundle".
///
/// # Safety
/// `run`, `dir` and `format` must be valid.
#[no_mangle]
pub unsafe extern "C" fn conjlab_run_emit(
    run: *const ConjlabRun,
    dir: *const c_char,
    format: *const c_char,
) -> ConjlabStatus {
    guarded(|| {
        if run.is_null() {
            set_error("null argument");
            return ConjlabStatus::NullArgument;
        }
        let dir = match cstr_arg(dir) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let format = match cstr_arg(format) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let fmt = match format {
            "json" => conjlab::report::EmitFormat::Json,
            "csv-bundle" => conjlab::report::EmitFormat::CsvBundle,
            other => {
                set_error(format!(
                    "format must be 'json' or 'csv-bundle', got '{other}'"
                ));
                return ConjlabStatus::ParseError;
            }
        };
        match conjlab::report::emit(&(*run).artifacts, fmt, std::path::Path::new(dir)) {
            Ok(_) => ConjlabStatus::Ok,
            Err(e) => {
                set_error(e.to_string());
                status_of(&e)
            }
        }
    })
}
