//! Exercises the C surface exactly the way a foreign binding would: through
//! the extern functions, raw pointers and status codes.

use std::ffi::{CStr, CString};
use std::ptr;

use conjlab_ffi::*;

#[test]
fn version_is_a_static_string() {
    let v = unsafe { CStr::from_ptr(conjlab_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn unknown_scenario_sets_error_message() {
    let id = CString::new("nope").unwrap();
    let mut run: *mut ConjlabRun = ptr::null_mut();
    let status = unsafe { conjlab_run_new(id.as_ptr(), ptr::null(), 0.0, &mut run) };
    assert_eq!(status, ConjlabStatus::UnknownScenario);
    assert!(run.is_null());
    let msg = unsafe { CStr::from_ptr(conjlab_last_error_message()) };
    assert!(msg.to_str().unwrap().contains("mpp-perturbed"));
}

#[test]
fn null_arguments_are_rejected() {
    let mut run: *mut ConjlabRun = ptr::null_mut();
    let status = unsafe { conjlab_run_new(ptr::null(), ptr::null(), 0.0, &mut run) };
    assert_eq!(status, ConjlabStatus::NullArgument);
    let id = CString::new("new-perturbed").unwrap();
    let status = unsafe { conjlab_run_new(id.as_ptr(), ptr::null(), 0.0, ptr::null_mut()) };
    assert_eq!(status, ConjlabStatus::NullArgument);
}

#[test]
fn full_run_through_the_handle() {
    let id = CString::new("new-perturbed").unwrap();
    let variant = CString::new("derived").unwrap();
    let mut run: *mut ConjlabRun = ptr::null_mut();
    let status = unsafe { conjlab_run_new(id.as_ptr(), variant.as_ptr(), 0.0, &mut run) };
    assert_eq!(status, ConjlabStatus::Ok);
    assert!(!run.is_null());

    let mut count = 0usize;
    assert_eq!(
        unsafe { conjlab_run_conjugate_count(run, &mut count) },
        ConjlabStatus::Ok
    );
    assert_eq!(count, 1);

    let mut t_star = 0.0f64;
    let mut mult = 0u32;
    let mut pos = [0.0f64; 3];
    let status = unsafe { conjlab_run_conjugate(run, 0, &mut t_star, &mut mult, pos.as_mut_ptr()) };
    assert_eq!(status, ConjlabStatus::Ok);
    assert!((t_star - std::f64::consts::PI).abs() < 1e-8);
    assert_eq!(mult, 2);
    assert!((pos[2] - std::f64::consts::PI).abs() < 1e-8);

    let status = unsafe { conjlab_run_conjugate(run, 5, &mut t_star, &mut mult, pos.as_mut_ptr()) };
    assert_eq!(status, ConjlabStatus::IndexOutOfRange);

    let mut class = ConjlabClassification::Undecided;
    assert_eq!(
        unsafe { conjlab_run_classification(run, 0, &mut class) },
        ConjlabStatus::Ok
    );
    assert_eq!(class, ConjlabClassification::CertifiedNonBifurcating);

    let mut json: *mut std::ffi::c_char = ptr::null_mut();
    assert_eq!(
        unsafe { conjlab_run_report_json(run, &mut json) },
        ConjlabStatus::Ok
    );
    let text = unsafe { CStr::from_ptr(json) }
        .to_str()
        .unwrap()
        .to_string();
    assert!(text.contains("\"scenario\": \"new-perturbed\""));
    assert!(text.contains("certified-non-bifurcating"));
    unsafe { conjlab_string_free(json) };

    let dir = std::env::temp_dir().join("conjlab-ffi-smoke");
    let _ = std::fs::remove_dir_all(&dir);
    let dir_c = CString::new(dir.to_str().unwrap()).unwrap();
    let fmt = CString::new("json").unwrap();
    assert_eq!(
        unsafe { conjlab_run_emit(run, dir_c.as_ptr(), fmt.as_ptr()) },
        ConjlabStatus::Ok
    );
    assert!(dir.join("report.json").exists());
    let _ = std::fs::remove_dir_all(&dir);

    unsafe { conjlab_run_free(run) };
}

#[test]
fn generated_header_exists_and_declares_the_surface() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("include")
        .join("conjlab.h");
    let text = std::fs::read_to_string(header).expect("cbindgen header generated at build time");
    for symbol in [
        "conjlab_version",
        "conjlab_run_new",
        "conjlab_run_free",
        "conjlab_run_report_json",
        "conjlab_run_conjugate_count",
        "conjlab_run_conjugate",
        "conjlab_run_classification",
        "conjlab_run_emit",
        "conjlab_string_free",
        "conjlab_last_error_message",
        "ConjlabStatus",
        "ConjlabRun",
    ] {
        assert!(text.contains(symbol), "header lacks {symbol}");
    }
}
