use std::ffi::{CStr, CString};
use std::ptr;

use freqsec_ffi::*;

fn data(name: &str) -> CString {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name);
    CString::new(std::fs::read_to_string(path).unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(freqsec_last_error()) }.to_str().unwrap().to_string()
}

struct Handle(*mut FreqsecSystem);

impl Drop for Handle {
    fn drop(&mut self) {
        unsafe { freqsec_system_free(self.0) }
    }
}

fn load(json: &CString) -> Handle {
    let mut h = ptr::null_mut();
    let status = unsafe { freqsec_system_from_json(json.as_ptr(), &mut h) };
    assert_eq!(status, FreqsecStatus::Ok, "{}", last_error());
    Handle(h)
}

#[test]
fn assess_validation_system() {
    let h = load(&data("validation.json"));
    let mut r = FreqsecReport {
        secure: false,
        rocof_ok: false,
        steady_state_ok: false,
        nadir_ok: false,
        rocof_margin: 0.0,
        steady_state_margin: 0.0,
        nadir_time: 0.0,
        nadir_depth: 0.0,
        soc_slack_ratio: 0.0,
    };
    assert_eq!(unsafe { freqsec_assess(h.0, &mut r) }, FreqsecStatus::Ok);
    assert!(r.secure && r.nadir_ok);
    assert_eq!(r.steady_state_margin, 2280.0 - 1800.0);
    assert!(r.soc_slack_ratio > 0.0 && r.soc_slack_ratio < 0.005);
    assert!(last_error().is_empty());
}

#[test]
fn nadir_rocof_and_trajectory() {
    let h = load(&data("validation.json"));
    let (mut t, mut depth, mut interval) = (0.0, 0.0, 0usize);
    assert_eq!(unsafe { freqsec_nadir(h.0, &mut t, &mut depth, &mut interval) }, FreqsecStatus::Ok);
    let mut at_nadir = 0.0;
    assert_eq!(unsafe { freqsec_delta_f(h.0, t, &mut at_nadir) }, FreqsecStatus::Ok);
    assert!((at_nadir + depth).abs() < 1e-12);

    // 1800 MW lost against 180 GW·s at 50 Hz
    let mut rocof = 0.0;
    assert_eq!(unsafe { freqsec_rocof(h.0, &mut rocof) }, FreqsecStatus::Ok);
    assert!((rocof - 0.25).abs() < 1e-12);
}

#[test]
fn normal_quantile_and_range_error() {
    let mut z = 0.0;
    assert_eq!(unsafe { freqsec_normal_inv_cdf(0.975, &mut z) }, FreqsecStatus::Ok);
    assert!((z - 1.959_963_984_540_054).abs() < 1e-9);
    assert_eq!(unsafe { freqsec_normal_inv_cdf(1.5, &mut z) }, FreqsecStatus::InvalidInput);
    assert!(last_error().contains("1.5"));
}

#[test]
fn null_and_malformed_inputs() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { freqsec_system_from_json(ptr::null(), &mut h) }, FreqsecStatus::NullPointer);
    assert!(h.is_null());
    let bad = CString::new("{\"spec\": 1}").unwrap();
    assert_eq!(unsafe { freqsec_system_from_json(bad.as_ptr(), &mut h) }, FreqsecStatus::Parse);
    assert!(!last_error().is_empty());
    let mut v = 0.0;
    assert_eq!(unsafe { freqsec_rocof(ptr::null(), &mut v) }, FreqsecStatus::NullPointer);
    unsafe { freqsec_system_free(ptr::null_mut()) };
    unsafe { freqsec_string_free(ptr::null_mut()) };
}

#[test]
fn optimize_returns_schedule_json() {
    let case = data("gb_case.json");
    let mut out = ptr::null_mut();
    let status = unsafe { freqsec_optimize_json(case.as_ptr(), 0.005, &mut out) };
    assert_eq!(status, FreqsecStatus::Ok, "{}", last_error());
    let text = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_string();
    unsafe { freqsec_string_free(out) };
    let schedule = freqsec::dispatch::Schedule::from_json(&text).unwrap();
    assert!(schedule.is_secure());

    assert_eq!(unsafe { freqsec_optimize_json(case.as_ptr(), 0.9, &mut out) }, FreqsecStatus::InvalidInput);
    assert!(out.is_null());
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(freqsec_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api() {
    let header =
        std::fs::read_to_string(std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/freqsec.h"))
            .unwrap();
    for name in [
        "typedef struct FreqsecSystem FreqsecSystem",
        "FREQSEC_STATUS_OK",
        "freqsec_system_from_json",
        "freqsec_assess",
        "freqsec_nadir",
        "freqsec_rocof",
        "freqsec_delta_f",
        "freqsec_normal_inv_cdf",
        "freqsec_optimize_json",
        "freqsec_string_free",
        "freqsec_version",
        "freqsec_last_error",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
