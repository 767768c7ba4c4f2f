//! C ABI over the fabflow simulator.
//!
//! Scenarios and runs are opaque handles owned by the caller and released with
//! the matching `*_free`. Every fallible call returns a [`FabStatus`]; the text
//! of the last failure on the calling thread is available from
//! [`fab_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fabflow::controller::{dwell_bound, lyapunov_v, EventReason};
use fabflow::experiments::{ExperimentError, ScenarioConfig};
use fabflow::scheduler::{run_closed_loop, ClosedLoopRun};
use fabflow::transport::TransportError;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ConfigError = 3,
    SolverError = 4,
    OutOfHorizon = 5,
    InvalidArgument = 6,
    Panic = 7,
}

/// Why an event was placed where it is.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FabEventReason {
    Initial = 0,
    Threshold = 1,
    MaxInterval = 2,
    Sampled = 3,
    Custom = 4,
}

impl From<EventReason> for FabEventReason {
    fn from(r: EventReason) -> Self {
        match r {
            EventReason::Initial => FabEventReason::Initial,
            EventReason::ThresholdCrossing => FabEventReason::Threshold,
            EventReason::MaxInterval => FabEventReason::MaxInterval,
            EventReason::Sampled => FabEventReason::Sampled,
            EventReason::Custom => FabEventReason::Custom,
        }
    }
}

/// One control update. `gap` is NaN for the interval cut off by the horizon.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FabEvent {
    pub index: usize,
    pub t_i: f64,
    pub u_i: f64,
    pub v_i: f64,
    pub w_i: f64,
    pub gap: f64,
    pub reason: FabEventReason,
}

/// Scenario description; see the JSON keys of the `fabflow` CLI.
pub struct FabScenario {
    config: ScenarioConfig,
}

/// A finished closed-loop simulation.
pub struct FabRun {
    run: ClosedLoopRun,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: FabStatus, msg: impl Into<String>) -> FabStatus {
    set_error(msg);
    status
}

fn transport_status(e: &TransportError) -> FabStatus {
    match e {
        TransportError::OutOfHorizon { .. } => FabStatus::OutOfHorizon,
        _ => FabStatus::SolverError,
    }
}

fn experiment_status(e: &ExperimentError) -> FabStatus {
    match e {
        ExperimentError::Transport(t) => transport_status(t),
        _ if e.exit_code() == 2 => FabStatus::ConfigError,
        _ => FabStatus::SolverError,
    }
}

/// Runs `f`, turning a panic into `FabStatus::Panic`.
fn guard(f: impl FnOnce() -> FabStatus) -> FabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(FabStatus::Panic, "internal panic"),
    }
}

macro_rules! deref {
    ($p:expr, $name:literal) => {
        match unsafe { $p.as_ref() } {
            Some(v) => v,
            None => return fail(FabStatus::NullPointer, concat!($name, " is null")),
        }
    };
}

macro_rules! deref_mut {
    ($p:expr, $name:literal) => {
        match unsafe { $p.as_mut() } {
            Some(v) => v,
            None => return fail(FabStatus::NullPointer, concat!($name, " is null")),
        }
    };
}

/// Message of the last failed call on this thread, or NULL if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fab_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default scenario: hyperbolic speed, the reference initial profile, event-triggered.
#[no_mangle]
pub extern "C" fn fab_scenario_new_default() -> *mut FabScenario {
    Box::into_raw(Box::new(FabScenario {
        config: ScenarioConfig::default(),
    }))
}

/// Parses a JSON scenario; missing keys take their defaults.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fab_scenario_from_json(
    json: *const c_char,
    out: *mut *mut FabScenario,
) -> FabStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return fail(FabStatus::NullPointer, "json or out is null");
        }
        let text = match unsafe { CStr::from_ptr(json) }.to_str() {
            Ok(t) => t,
            Err(e) => return fail(FabStatus::InvalidUtf8, e.to_string()),
        };
        match ScenarioConfig::from_json(text) {
            Ok(config) => {
                unsafe { *out = Box::into_raw(Box::new(FabScenario { config })) };
                FabStatus::Ok
            }
            Err(e) => fail(experiment_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `scenario` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn fab_scenario_free(scenario: *mut FabScenario) {
    if !scenario.is_null() {
        drop(unsafe { Box::from_raw(scenario) });
    }
}

fn set_positive(
    scenario: *mut FabScenario,
    value: f64,
    name: &str,
    apply: impl FnOnce(&mut ScenarioConfig, f64),
) -> FabStatus {
    let s = deref_mut!(scenario, "scenario");
    if !(value.is_finite() && value > 0.0) {
        return fail(
            FabStatus::InvalidArgument,
            format!("{name} must be positive, got {value}"),
        );
    }
    apply(&mut s.config, value);
    FabStatus::Ok
}

/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fab_scenario_set_sigma(scenario: *mut FabScenario, sigma: f64) -> FabStatus {
    set_positive(scenario, sigma, "sigma", |c, v| c.sigma = v)
}

/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fab_scenario_set_rho_s(scenario: *mut FabScenario, rho_s: f64) -> FabStatus {
    set_positive(scenario, rho_s, "rho_s", |c, v| c.rho_s = v)
}

/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fab_scenario_set_t_end(scenario: *mut FabScenario, t_end: f64) -> FabStatus {
    set_positive(scenario, t_end, "t_end", |c, v| c.t_end = v)
}

/// Selects the reference profile family member with parameter `l ≥ 0`.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fab_scenario_set_profile_l(scenario: *mut FabScenario, l: f64) -> FabStatus {
    let s = deref_mut!(scenario, "scenario");
    if !(l.is_finite() && l >= 0.0) {
        return fail(FabStatus::InvalidArgument, format!("l must be non-negative, got {l}"));
    }
    s.config.profile = "paper".into();
    s.config.profile_l = l;
    FabStatus::Ok
}

/// Event-triggered updates.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fab_scenario_set_event_triggered(scenario: *mut FabScenario) -> FabStatus {
    let s = deref_mut!(scenario, "scenario");
    s.config.mode = "event".into();
    FabStatus::Ok
}

/// Periodic updates every `period` time units.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fab_scenario_set_sampled(scenario: *mut FabScenario, period: f64) -> FabStatus {
    set_positive(scenario, period, "period", |c, v| {
        c.mode = "sampled".into();
        c.period = v;
    })
}

/// Whether event gaps are capped at 1/λ(0).
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fab_scenario_set_gap_cap(scenario: *mut FabScenario, enabled: bool) -> FabStatus {
    let s = deref_mut!(scenario, "scenario");
    s.config.eq8b_cap = enabled;
    FabStatus::Ok
}

fn simulate(config: &ScenarioConfig) -> Result<ClosedLoopRun, ExperimentError> {
    config.validate()?;
    Ok(run_closed_loop(
        &config.initial_profile()?,
        &config.speed_function()?,
        config.params(),
        &config.schedule_mode()?,
        config.t_end,
        &config.run_options(),
    )?)
}

/// Simulates the scenario over [0, t_end].
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fab_run(scenario: *const FabScenario, out: *mut *mut FabRun) -> FabStatus {
    guard(|| {
        let s = deref!(scenario, "scenario");
        if out.is_null() {
            return fail(FabStatus::NullPointer, "out is null");
        }
        match simulate(&s.config) {
            Ok(run) => {
                unsafe { *out = Box::into_raw(Box::new(FabRun { run })) };
                FabStatus::Ok
            }
            Err(e) => fail(experiment_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `run` must come from [`fab_run`] and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn fab_run_free(run: *mut FabRun) {
    if !run.is_null() {
        drop(unsafe { Box::from_raw(run) });
    }
}

/// Number of events including the one at t = 0; 0 for NULL.
///
/// # Safety
/// `run` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn fab_run_event_count(run: *const FabRun) -> usize {
    unsafe { run.as_ref() }.map_or(0, |r| r.run.log.len())
}

/// Horizon of the run; NaN for NULL.
///
/// # Safety
/// `run` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn fab_run_t_end(run: *const FabRun) -> f64 {
    unsafe { run.as_ref() }.map_or(f64::NAN, |r| r.run.t_end())
}

/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fab_run_event(run: *const FabRun, index: usize, out: *mut FabEvent) -> FabStatus {
    let r = deref!(run, "run");
    let out = deref_mut!(out, "out");
    let Some(e) = r.run.log.entries.get(index) else {
        return fail(
            FabStatus::InvalidArgument,
            format!("event {index} out of range ({} events)", r.run.log.len()),
        );
    };
    *out = FabEvent {
        index: e.index,
        t_i: e.t_i,
        u_i: e.u_i,
        v_i: e.v_i,
        w_i: e.w_i,
        gap: e.gap.unwrap_or(f64::NAN),
        reason: e.reason.into(),
    };
    FabStatus::Ok
}

fn query(
    run: *const FabRun,
    out: *mut f64,
    f: impl FnOnce(&ClosedLoopRun) -> Result<f64, FabStatus>,
) -> FabStatus {
    guard(|| {
        let r = deref!(run, "run");
        let out = deref_mut!(out, "out");
        match f(&r.run) {
            Ok(v) => {
                *out = v;
                FabStatus::Ok
            }
            Err(status) => status,
        }
    })
}

fn from_transport<T>(res: Result<T, TransportError>) -> Result<T, FabStatus> {
    res.map_err(|e| fail(transport_status(&e), e.to_string()))
}

/// W(t).
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fab_run_w_at(run: *const FabRun, t: f64, out: *mut f64) -> FabStatus {
    query(run, out, |r| from_transport(r.trajectory.w_at(t)))
}

/// ρ(t, x) for x in [0, 1].
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fab_run_density_at(run: *const FabRun, t: f64, x: f64, out: *mut f64) -> FabStatus {
    query(run, out, |r| {
        if !(0.0..=1.0).contains(&x) {
            return Err(fail(FabStatus::InvalidArgument, format!("x={x} outside [0, 1]")));
        }
        from_transport(r.trajectory.density_at(t, x))
    })
}

/// λ(W(t))·ρ(t, 1).
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fab_run_outflux(run: *const FabRun, t: f64, out: *mut f64) -> FabStatus {
    query(run, out, |r| from_transport(r.trajectory.outflux(t)))
}

/// Lyapunov value V at time t.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fab_run_lyapunov(run: *const FabRun, t: f64, out: *mut f64) -> FabStatus {
    query(run, out, |r| {
        let slice = from_transport(r.trajectory.slice(t))?;
        lyapunov_v(&slice, r.params.rho_s, r.params.sigma, r.options.trigger.scan_n)
            .map_err(|e| fail(FabStatus::SolverError, e.to_string()))
    })
}

/// Guaranteed dwell time for Lyapunov value `s`, decay rate `sigma`, speed
/// Lipschitz constant `k` and set point `rho_s`. NaN on invalid input.
#[no_mangle]
pub extern "C" fn fab_dwell_bound(s: f64, sigma: f64, k: f64, rho_s: f64) -> f64 {
    let ok = s.is_finite() && s >= 0.0 && sigma > 0.0 && k > 0.0 && rho_s > 0.0;
    if ok && sigma.is_finite() && k.is_finite() && rho_s.is_finite() {
        dwell_bound(s, sigma, k, rho_s)
    } else {
        f64::NAN
    }
}
