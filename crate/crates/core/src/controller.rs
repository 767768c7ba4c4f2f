//! Control law, log-scale Lyapunov functional, event trigger and the closed-form
//! guarantee constants.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plant::{DensityProfile, DensityView, SpeedFunction};
use crate::transport::{SolverOptions, Trajectory, TransportError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("positivity violation: density {value} at x={x}")]
    Positivity { x: f64, value: f64 },
    #[error("invalid controller parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// ρ_s and σ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    pub rho_s: f64,
    pub sigma: f64,
}

impl ControllerParams {
    pub fn new(rho_s: f64, sigma: f64) -> Result<Self, ControllerError> {
        if !(rho_s.is_finite() && rho_s > 0.0) {
            return Err(ControllerError::InvalidParameter(format!("rho_s={rho_s}")));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(ControllerError::InvalidParameter(format!("sigma={sigma}")));
        }
        Ok(Self { rho_s, sigma })
    }
}

/// Event-detection settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TriggerOptions {
    pub scan_dt: f64,
    pub bisect_tol: f64,
    /// Points of the uniform part of every sup-scan.
    pub scan_n: usize,
    /// Cap every gap at 1/λ(0).
    pub eq8b_cap: bool,
    /// Exceedance below this is treated as round-off.
    pub noise_floor: f64,
}

impl Default for TriggerOptions {
    fn default() -> Self {
        Self {
            scan_dt: 1e-3,
            bisect_tol: 1e-8,
            scan_n: 2001,
            eq8b_cap: true,
            noise_floor: 1e-12,
        }
    }
}

impl TriggerOptions {
    pub fn validate(&self) -> Result<(), ControllerError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.scan_dt) {
            return Err(ControllerError::InvalidParameter(format!(
                "scan_dt={}",
                self.scan_dt
            )));
        }
        if !ok(self.bisect_tol) {
            return Err(ControllerError::InvalidParameter(format!(
                "bisect_tol={}",
                self.bisect_tol
            )));
        }
        if self.scan_n < 2 {
            return Err(ControllerError::InvalidParameter("scan_n < 2".into()));
        }
        if !(self.noise_floor.is_finite() && self.noise_floor >= 0.0) {
            return Err(ControllerError::InvalidParameter(format!(
                "noise_floor={}",
                self.noise_floor
            )));
        }
        Ok(())
    }
}

/// Monitoring data for the current inter-event interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TriggerState {
    pub t_i: f64,
    pub u_i: f64,
    pub v_i: f64,
    pub phi_at_ti: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventReason {
    Initial,
    ThresholdCrossing,
    MaxInterval,
    Sampled,
    Custom,
}

impl EventReason {
    pub fn as_str(self) -> &'static str {
        match self {
            EventReason::Initial => "initial",
            EventReason::ThresholdCrossing => "threshold",
            EventReason::MaxInterval => "max_interval",
            EventReason::Sampled => "sampled",
            EventReason::Custom => "custom",
        }
    }
}

/// uᵢ = ρ_s·λ(W(tᵢ)).
pub fn control_law(w_at_event: f64, rho_s: f64, speed: &SpeedFunction) -> f64 {
    rho_s * speed.value(w_at_event.max(0.0))
}

fn weighted_sup(
    view: &impl DensityView,
    rho_s: f64,
    sigma: f64,
    scan_n: usize,
) -> Result<f64, ControllerError> {
    let n = scan_n.max(2);
    let mut best = 0.0_f64;
    let mut visit = |x: f64, rho: f64| -> Result<(), ControllerError> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(ControllerError::Positivity { x, value: rho });
        }
        best = best.max((rho / rho_s).ln().abs() * (-sigma * x).exp());
        Ok(())
    };
    for (k, rho) in view.sample_uniform(n).into_iter().enumerate() {
        visit(k as f64 / (n - 1) as f64, rho)?;
    }
    for j in view.jumps() {
        visit(j.x, j.left)?;
        visit(j.x, j.right)?;
    }
    Ok(best)
}

/// V = sup_x |ln(ρ(x)/ρ_s)|·e^{−σx}, from `scan_n` uniform points plus both
/// one-sided limits at every jump of the view.
pub fn lyapunov_v(
    view: &impl DensityView,
    rho_s: f64,
    sigma: f64,
    scan_n: usize,
) -> Result<f64, ControllerError> {
    weighted_sup(view, rho_s, sigma, scan_n)
}

/// sup_x |ln(ρ(x)/ρ_s)|.
pub fn sup_log_deviation(
    view: &impl DensityView,
    rho_s: f64,
    scan_n: usize,
) -> Result<f64, ControllerError> {
    weighted_sup(view, rho_s, 0.0, scan_n)
}

/// e^{−σ(Φ(τ) − Φ(tᵢ))}·Vᵢ.
pub fn trigger_threshold(state: &TriggerState, phi_now: f64, sigma: f64) -> f64 {
    (-sigma * (phi_now - state.phi_at_ti).max(0.0)).exp() * state.v_i
}

/// |ln(ρ(τ,0)/ρ_s)| = |ln(uᵢ/(ρ_s·λ(W(τ))))|.
pub fn boundary_deviation(
    state: &TriggerState,
    w_now: f64,
    speed: &SpeedFunction,
    rho_s: f64,
) -> f64 {
    (state.u_i / (rho_s * speed.value(w_now))).ln().abs()
}

/// dev − threshold at τ along a stored trajectory.
fn exceedance(
    traj: &Trajectory,
    state: &TriggerState,
    params: ControllerParams,
    tau: f64,
) -> Result<f64, ControllerError> {
    let w = traj.w_at(tau)?;
    let phi = traj.phi_at(tau)?;
    Ok(boundary_deviation(state, w, traj.speed(), params.rho_s)
        - trigger_threshold(state, phi, params.sigma))
}

/// First τ in (from, to] where the deviation exceeds the threshold, located by a
/// scan of step `scan_dt` and bisection; the upper end of the final bracket is
/// returned. `from` must be ≥ tᵢ and `to` within the trajectory.
pub fn scan_for_crossing(
    traj: &Trajectory,
    state: &TriggerState,
    params: ControllerParams,
    from: f64,
    to: f64,
    opts: &TriggerOptions,
) -> Result<Option<f64>, ControllerError> {
    let fires = |tau: f64| -> Result<bool, ControllerError> {
        Ok(exceedance(traj, state, params, tau)? > opts.noise_floor)
    };
    let span = to - from;
    if span <= 0.0 {
        return Ok(None);
    }
    let steps = (span / opts.scan_dt).ceil() as usize;
    let mut lo = from;
    for k in 1..=steps {
        let hi = if k == steps {
            to
        } else {
            from + k as f64 * opts.scan_dt
        };
        if fires(hi)? {
            let mut hi = hi;
            while hi - lo > opts.bisect_tol {
                let mid = 0.5 * (lo + hi);
                if fires(mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(Some(hi));
        }
        lo = hi;
    }
    Ok(None)
}

/// Next event time with the 1/λ(0) cap. The trajectory must reach tᵢ + 1/λ(0).
pub fn next_event(
    traj: &Trajectory,
    state: &TriggerState,
    params: ControllerParams,
    opts: &TriggerOptions,
) -> Result<(f64, EventReason), ControllerError> {
    let cap = state.t_i + 1.0 / traj.speed().lambda0();
    if traj.t_end() < cap {
        return Err(TransportError::OutOfHorizon {
            t: cap,
            end: traj.t_end(),
        }
        .into());
    }
    match scan_for_crossing(traj, state, params, state.t_i, cap, opts)? {
        Some(t) => Ok((t, EventReason::ThresholdCrossing)),
        None => Ok((cap, EventReason::MaxInterval)),
    }
}

/// Smallest s handled by the closed form; below it the s → 0 limit is used.
const DWELL_SMALL_S: f64 = 1e-8;

/// Guaranteed dwell time T̃(s) for a Lyapunov value s at the last event.
pub fn dwell_bound(s: f64, sigma: f64, k: f64, rho_s: f64) -> f64 {
    let scale = 1.0 / (k * rho_s);
    if s >= DWELL_SMALL_S {
        // ln(1 + s·e^{s−σ}/(e^{e^σ s} − 1))·e^{−s}, with the ratio formed in
        // log space so that large s cannot produce inf/inf.
        let a = sigma.exp() * s;
        let ln_denom = if a > 30.0 { a + (-a).exp().ln_1p() } else { a.exp_m1().ln() };
        let ratio = (s.ln() + s - sigma - ln_denom).exp();
        scale * (-s).exp() * ratio.ln_1p()
    } else {
        scale * (-2.0 * sigma).exp().ln_1p()
    }
}

/// c(ρ₀) = λ(ρ_s·exp(e^σ·sup|ln(ρ₀/ρ_s)|)).
pub fn decay_constant(
    profile0: &impl DensityView,
    params: ControllerParams,
    speed: &SpeedFunction,
    scan_n: usize,
) -> Result<f64, ControllerError> {
    let sup = sup_log_deviation(profile0, params.rho_s, scan_n)?;
    Ok(decay_constant_from_sup(sup, params, speed))
}

pub fn decay_constant_from_sup(sup: f64, params: ControllerParams, speed: &SpeedFunction) -> f64 {
    speed.value(params.rho_s * (params.sigma.exp() * sup).exp())
}

/// e^{−σ(c·t − 1)}·R₀, the bound on sup_x|ln(ρ(t,x)/ρ_s)|.
pub fn global_estimate(t: f64, c: f64, sigma: f64, sup0: f64) -> f64 {
    (-sigma * (c * t - 1.0)).exp() * sup0
}

/// V at t = 0 for an event at t = 0: the profile on (0, 1] together with the
/// boundary value ρ_s that the control law imposes.
pub fn initial_lyapunov(
    profile0: &DensityProfile,
    params: ControllerParams,
    scan_n: usize,
) -> Result<f64, ControllerError> {
    lyapunov_v(profile0, params.rho_s, params.sigma, scan_n)
}

/// G(ρ₀) = min(1/λ(0), r): r is the first threshold crossing of the open loop
/// with the input frozen at ρ_s·λ(∫ρ₀).
pub fn robustness_window(
    profile0: &DensityProfile,
    params: ControllerParams,
    speed: &SpeedFunction,
    solver: &SolverOptions,
    opts: &TriggerOptions,
) -> Result<f64, ControllerError> {
    let cap = 1.0 / speed.lambda0();
    let u = control_law(profile0.total_mass(), params.rho_s, speed);
    let traj = Trajectory::open_loop(profile0.clone(), speed.clone(), u, cap, *solver)?;
    let state = TriggerState {
        t_i: 0.0,
        u_i: u,
        v_i: initial_lyapunov(profile0, params, opts.scan_n)?,
        phi_at_ti: 0.0,
    };
    let capped = TriggerOptions {
        eq8b_cap: true,
        ..*opts
    };
    Ok(next_event(&traj, &state, params, &capped)?.0)
}

/// The constants behind the closed-loop guarantees for one initial profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GuaranteeConstants {
    pub sigma: f64,
    pub v0: f64,
    pub sup_log0: f64,
    pub c_rho0: f64,
    pub t_tilde_of_v0: f64,
    pub t_tilde_of_0: f64,
    pub g_rho0: f64,
}

pub fn guarantee_constants(
    profile0: &DensityProfile,
    params: ControllerParams,
    speed: &SpeedFunction,
    solver: &SolverOptions,
    opts: &TriggerOptions,
) -> Result<GuaranteeConstants, ControllerError> {
    let v0 = initial_lyapunov(profile0, params, opts.scan_n)?;
    let sup_log0 = sup_log_deviation(profile0, params.rho_s, opts.scan_n)?;
    let k = speed.lipschitz_k();
    Ok(GuaranteeConstants {
        sigma: params.sigma,
        v0,
        sup_log0,
        c_rho0: decay_constant_from_sup(sup_log0, params, speed),
        t_tilde_of_v0: dwell_bound(v0, params.sigma, k, params.rho_s),
        t_tilde_of_0: dwell_bound(0.0, params.sigma, k, params.rho_s),
        g_rho0: robustness_window(profile0, params, speed, solver, opts)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::builtin_profile_paper;
    use approx::assert_relative_eq;

    const REFERENCE: ControllerParams = ControllerParams {
        rho_s: 1.0,
        sigma: 0.02,
    };

    #[test]
    fn control_law_examples() {
        let speed = SpeedFunction::hyperbolic();
        assert_eq!(control_law(1.0, 1.0, &speed), 0.5);
        let w0 = 6.0 + 2.0 / std::f64::consts::PI;
        assert_relative_eq!(control_law(w0, 1.0, &speed), 0.130947988744760, epsilon = 1e-14);
        assert_eq!(control_law(0.0, 2.0, &speed), 2.0);
    }

    #[test]
    fn lyapunov_examples() {
        let flat = DensityProfile::constant(1.0).unwrap();
        assert_eq!(lyapunov_v(&flat, 1.0, 0.02, 2001).unwrap(), 0.0);
        let e = DensityProfile::constant(std::f64::consts::E).unwrap();
        assert_relative_eq!(lyapunov_v(&e, 1.0, 0.3, 11).unwrap(), 1.0, epsilon = 1e-15);
        let p = builtin_profile_paper(0.0).unwrap();
        // Reference from a 10⁶-point search: 1.9270799888772345 near x ≈ 0.4724.
        let v = lyapunov_v(&p, 1.0, 0.02, 2001).unwrap();
        assert!((v - 1.9270799888772345).abs() < 1e-6, "{v}");
    }

    #[test]
    fn lyapunov_rejects_nonpositive() {
        let p = DensityProfile::piecewise_linear(&[0.0, 1.0], &[1.0, 2.0]).unwrap();
        assert!(lyapunov_v(&p, 1.0, 0.1, 5).is_ok());
        let err = weighted_sup(&ZeroAt, 1.0, 0.0, 5).unwrap_err();
        assert!(matches!(err, ControllerError::Positivity { .. }));
    }

    struct ZeroAt;
    impl DensityView for ZeroAt {
        fn density(&self, x: f64) -> f64 {
            if x > 0.5 {
                0.0
            } else {
                1.0
            }
        }
        fn jumps(&self) -> Vec<crate::plant::Jump> {
            Vec::new()
        }
    }

    #[test]
    fn threshold_examples() {
        let st = TriggerState {
            t_i: 0.0,
            u_i: 0.5,
            v_i: 1.9266,
            phi_at_ti: 0.3,
        };
        assert_eq!(trigger_threshold(&st, 0.3, 0.02), 1.9266);
        assert_relative_eq!(
            trigger_threshold(&st, 0.8, 0.02),
            1.9074300097011474,
            epsilon = 1e-14
        );
        let zero = TriggerState { v_i: 0.0, ..st };
        assert_eq!(trigger_threshold(&zero, 5.0, 0.02), 0.0);
    }

    #[test]
    fn deviation_examples() {
        let speed = SpeedFunction::hyperbolic();
        let st = TriggerState {
            t_i: 0.0,
            u_i: control_law(1.0, 1.0, &speed),
            v_i: 0.0,
            phi_at_ti: 0.0,
        };
        assert_eq!(boundary_deviation(&st, 1.0, &speed, 1.0), 0.0);
        assert_relative_eq!(
            boundary_deviation(&st, 3.0, &speed, 1.0),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
    }

    #[test]
    fn dwell_bound_values() {
        assert_relative_eq!(dwell_bound(0.0, 0.02, 1.0, 1.0), 0.673347167228034, epsilon = 1e-14);
        assert_relative_eq!(dwell_bound(1e-8, 0.02, 1.0, 1.0), 0.67334716289508, epsilon = 1e-12);
        assert!((dwell_bound(1e-8, 0.02, 1.0, 1.0) - dwell_bound(0.0, 0.02, 1.0, 1.0)).abs() < 1e-6);
        assert_relative_eq!(dwell_bound(1.9266, 0.02, 1.0, 1.0), 0.16535492665769, epsilon = 1e-12);
        assert_relative_eq!(
            dwell_bound(1.9270799888772345, 0.02, 1.0, 1.0),
            0.16529135195762,
            epsilon = 1e-12
        );
        assert!(dwell_bound(1.9266, 0.02, 1.0, 1.0) < dwell_bound(0.0, 0.02, 1.0, 1.0));
        // Scales with 1/(Kρ_s).
        assert_relative_eq!(
            dwell_bound(0.7, 0.1, 2.0, 3.0) * 6.0,
            dwell_bound(0.7, 0.1, 1.0, 1.0),
            epsilon = 1e-14
        );
    }

    #[test]
    fn decay_constant_examples() {
        let speed = SpeedFunction::hyperbolic();
        let p = builtin_profile_paper(0.0).unwrap();
        let c = decay_constant(&p, REFERENCE, &speed, 2001).unwrap();
        assert_relative_eq!(c, 0.12076346688020717, epsilon = 1e-12);
        let flat = DensityProfile::constant(1.0).unwrap();
        assert_eq!(decay_constant(&flat, REFERENCE, &speed, 11).unwrap(), speed.value(1.0));
        assert!(c <= speed.lambda0());
    }

    #[test]
    fn robustness_window_at_equilibrium_is_the_cap() {
        let speed = SpeedFunction::hyperbolic();
        let flat = DensityProfile::constant(1.0).unwrap();
        let g = robustness_window(
            &flat,
            REFERENCE,
            &speed,
            &SolverOptions::default(),
            &TriggerOptions::default(),
        )
        .unwrap();
        assert_eq!(g, 1.0);
    }

    #[test]
    fn robustness_window_respects_dwell_bound() {
        let speed = SpeedFunction::hyperbolic();
        let p = builtin_profile_paper(0.0).unwrap();
        let consts = guarantee_constants(
            &p,
            REFERENCE,
            &speed,
            &SolverOptions::default(),
            &TriggerOptions::default(),
        )
        .unwrap();
        assert!(consts.g_rho0 <= 1.0);
        assert!(consts.g_rho0 >= consts.t_tilde_of_v0.min(1.0));
    }

    #[test]
    fn invalid_params() {
        assert!(ControllerParams::new(0.0, 0.1).is_err());
        assert!(ControllerParams::new(1.0, -0.1).is_err());
        let bad = TriggerOptions {
            scan_dt: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
