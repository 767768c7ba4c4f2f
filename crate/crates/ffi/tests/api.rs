use std::ffi::{CStr, CString};
use std::ptr;

use fabflow_ffi::*;

fn last_error() -> String {
    let p = fab_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn run_default(t_end: f64) -> *mut FabRun {
    let scenario = fab_scenario_new_default();
    unsafe {
        assert_eq!(fab_scenario_set_t_end(scenario, t_end), FabStatus::Ok);
        let mut run = ptr::null_mut();
        assert_eq!(fab_run(scenario, &mut run), FabStatus::Ok);
        fab_scenario_free(scenario);
        run
    }
}

#[test]
fn default_run_reports_reference_values() {
    let run = run_default(5.0);
    unsafe {
        assert_eq!(fab_run_t_end(run), 5.0);
        let mut w = 0.0;
        assert_eq!(fab_run_w_at(run, 0.0, &mut w), FabStatus::Ok);
        assert!((w - 6.636619772367581).abs() < 1e-12);
        let mut q = 0.0;
        assert_eq!(fab_run_outflux(run, 0.0, &mut q), FabStatus::Ok);
        assert!((q - 0.785687932468559).abs() < 1e-12);
        let mut v = 0.0;
        assert_eq!(fab_run_lyapunov(run, 0.0, &mut v), FabStatus::Ok);
        // V comes from a 2001-point scan, so it trails the exact supremum slightly.
        assert!((v - 1.9270799888772345).abs() < 1e-7, "V(0) = {v}");

        let n = fab_run_event_count(run);
        assert_eq!(n, 5);
        let mut e = std::mem::zeroed::<FabEvent>();
        assert_eq!(fab_run_event(run, 0, &mut e), FabStatus::Ok);
        assert_eq!(e.reason, FabEventReason::Initial);
        assert!((e.u_i - 0.130947988744760).abs() < 1e-14);
        assert_eq!(e.gap, 1.0);
        assert_eq!(fab_run_event(run, n - 1, &mut e), FabStatus::Ok);
        assert!(e.gap.is_nan());
        assert_eq!(fab_run_event(run, n, &mut e), FabStatus::InvalidArgument);
        assert!(last_error().contains("out of range"));
        fab_run_free(run);
    }
}

#[test]
fn queries_outside_the_run_are_reported() {
    let run = run_default(2.0);
    unsafe {
        let mut out = 0.0;
        assert_eq!(fab_run_w_at(run, 3.0, &mut out), FabStatus::OutOfHorizon);
        assert_eq!(fab_run_density_at(run, 1.0, 1.5, &mut out), FabStatus::InvalidArgument);
        assert_eq!(fab_run_density_at(run, 1.0, 0.5, &mut out), FabStatus::Ok);
        assert!(out > 0.0);
        assert_eq!(fab_run_w_at(run, 1.0, ptr::null_mut()), FabStatus::NullPointer);
        fab_run_free(run);
    }
}

#[test]
fn json_scenarios_and_setters() {
    let json = CString::new(r#"{"profile": "constant", "t_end": 3, "mode": "sampled", "period": 0.5}"#).unwrap();
    let mut scenario = ptr::null_mut();
    unsafe {
        assert_eq!(fab_scenario_from_json(json.as_ptr(), &mut scenario), FabStatus::Ok);
        let mut run = ptr::null_mut();
        assert_eq!(fab_run(scenario, &mut run), FabStatus::Ok);
        assert_eq!(fab_run_event_count(run), 6);
        let mut e = std::mem::zeroed::<FabEvent>();
        assert_eq!(fab_run_event(run, 1, &mut e), FabStatus::Ok);
        assert_eq!(e.reason, FabEventReason::Sampled);
        fab_run_free(run);

        assert_eq!(fab_scenario_set_sigma(scenario, -1.0), FabStatus::InvalidArgument);
        assert!(last_error().contains("sigma"));
        assert_eq!(fab_scenario_set_sampled(scenario, 0.0), FabStatus::InvalidArgument);
        assert_eq!(fab_scenario_set_profile_l(scenario, 2.0), FabStatus::Ok);
        assert_eq!(fab_scenario_set_event_triggered(scenario), FabStatus::Ok);
        assert_eq!(fab_scenario_set_gap_cap(scenario, false), FabStatus::Ok);
        assert_eq!(fab_scenario_set_rho_s(scenario, 2.0), FabStatus::Ok);
        assert_eq!(fab_run(scenario, &mut run), FabStatus::Ok);
        assert_eq!(fab_run_event_count(run), 1);
        fab_run_free(run);
        fab_scenario_free(scenario);
    }
}

#[test]
fn bad_input_maps_to_status_codes() {
    let mut scenario = ptr::null_mut();
    unsafe {
        let bad = CString::new(r#"{"sigma": -3}"#).unwrap();
        assert_eq!(fab_scenario_from_json(bad.as_ptr(), &mut scenario), FabStatus::ConfigError);
        assert!(last_error().contains("sigma"));
        assert!(scenario.is_null());

        let not_utf8 = [0xffu8, 0xfe, 0];
        assert_eq!(
            fab_scenario_from_json(not_utf8.as_ptr().cast(), &mut scenario),
            FabStatus::InvalidUtf8
        );
        assert_eq!(fab_scenario_from_json(ptr::null(), &mut scenario), FabStatus::NullPointer);
        assert_eq!(fab_run(ptr::null(), &mut ptr::null_mut()), FabStatus::NullPointer);
        assert_eq!(fab_scenario_set_sigma(ptr::null_mut(), 1.0), FabStatus::NullPointer);

        let blow_up = CString::new(r#"{"w_ceiling": 2.0, "t_end": 2}"#).unwrap();
        assert_eq!(fab_scenario_from_json(blow_up.as_ptr(), &mut scenario), FabStatus::Ok);
        let mut run = ptr::null_mut();
        assert_eq!(fab_run(scenario, &mut run), FabStatus::SolverError);
        assert!(run.is_null());
        fab_scenario_free(scenario);

        fab_scenario_free(ptr::null_mut());
        fab_run_free(ptr::null_mut());
        assert_eq!(fab_run_event_count(ptr::null()), 0);
        assert!(fab_run_t_end(ptr::null()).is_nan());
    }
}

#[test]
fn dwell_bound_matches_reference_values() {
    let k = 1.0;
    assert!((fab_dwell_bound(0.0, 0.02, k, 1.0) - 0.673347167228034).abs() < 1e-12);
    assert!((fab_dwell_bound(1.9270799888772345, 0.02, k, 1.0) - 0.16529135195762).abs() < 1e-12);
    assert!(fab_dwell_bound(-1.0, 0.02, k, 1.0).is_nan());
    assert!(fab_dwell_bound(1.0, 0.0, k, 1.0).is_nan());
}

#[test]
fn errors_are_per_thread() {
    unsafe {
        assert_eq!(fab_scenario_set_t_end(ptr::null_mut(), 1.0), FabStatus::NullPointer);
    }
    std::thread::spawn(|| assert!(fab_last_error_message().is_null()))
        .join()
        .unwrap();
    assert!(last_error().contains("scenario is null"));
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(fab_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
