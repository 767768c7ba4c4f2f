//! Closed-loop runs: event-triggered, periodic, given event times, and a fixed
//! fraction of the robustness window.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{
    control_law, lyapunov_v, next_event, scan_for_crossing, ControllerError, ControllerParams,
    EventReason, TriggerOptions, TriggerState,
};
use crate::plant::{DensityProfile, SpeedFunction};
use crate::transport::{SolverOptions, Trajectory, TransportError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchedulerError {
    #[error("invalid schedule: {0}")]
    InvalidMode(String),
    #[error("t_end must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleMode {
    EventTriggered,
    SampledData { period: f64 },
    Custom { times: Vec<f64> },
    /// tᵢ₊₁ = tᵢ + θ·G(ρ[tᵢ]) with θ ∈ (0, 1].
    RobustFraction { fraction: f64 },
}

impl ScheduleMode {
    pub fn validate(&self) -> Result<(), SchedulerError> {
        match self {
            ScheduleMode::EventTriggered => Ok(()),
            ScheduleMode::SampledData { period } => {
                if period.is_finite() && *period > 0.0 {
                    Ok(())
                } else {
                    Err(SchedulerError::InvalidMode(format!("period={period}")))
                }
            }
            ScheduleMode::Custom { times } => {
                if times.first() != Some(&0.0) {
                    return Err(SchedulerError::InvalidMode(
                        "custom times must start at 0".into(),
                    ));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
                    return Err(SchedulerError::InvalidMode(
                        "custom times must be finite and strictly increasing".into(),
                    ));
                }
                Ok(())
            }
            ScheduleMode::RobustFraction { fraction } => {
                if *fraction > 0.0 && *fraction <= 1.0 {
                    Ok(())
                } else {
                    Err(SchedulerError::InvalidMode(format!("fraction={fraction}")))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunOptions {
    pub solver: SolverOptions,
    pub trigger: TriggerOptions,
    /// In custom mode, check every gap against G(ρ[tᵢ]).
    pub verify_eq16: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EventEntry {
    pub index: usize,
    pub t_i: f64,
    pub u_i: f64,
    pub v_i: f64,
    pub w_i: f64,
    pub phi_i: f64,
    pub reason: EventReason,
    /// tᵢ₊₁ − tᵢ; `None` for the interval cut off by the horizon.
    pub gap: Option<f64>,
    /// G(ρ[tᵢ]) when it was computed.
    pub robustness_window: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EventLog {
    pub entries: Vec<EventEntry>,
    pub warnings: Vec<String>,
}

impl EventLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Completed inter-event times.
    pub fn gaps(&self) -> Vec<f64> {
        self.entries.iter().filter_map(|e| e.gap).collect()
    }

    /// Index of the interval containing t.
    pub fn interval_at(&self, t: f64) -> usize {
        self.entries.partition_point(|e| e.t_i <= t).max(1) - 1
    }
}

#[derive(Debug, Clone)]
pub struct ClosedLoopRun {
    pub trajectory: Trajectory,
    pub log: EventLog,
    pub params: ControllerParams,
    pub mode: ScheduleMode,
    pub options: RunOptions,
}

impl ClosedLoopRun {
    pub fn t_end(&self) -> f64 {
        self.trajectory.t_end()
    }

    pub fn trigger_state(&self, i: usize) -> TriggerState {
        let e = &self.log.entries[i];
        TriggerState {
            t_i: e.t_i,
            u_i: e.u_i,
            v_i: e.v_i,
            phi_at_ti: e.phi_i,
        }
    }
}

/// Runs the loop: at each event tᵢ set uᵢ = ρ_s·λ(W(tᵢ)), hold it, and pick tᵢ₊₁
/// according to `mode`, until `t_end`.
pub fn run_closed_loop(
    profile0: &DensityProfile,
    speed: &SpeedFunction,
    params: ControllerParams,
    mode: &ScheduleMode,
    t_end: f64,
    opts: &RunOptions,
) -> Result<ClosedLoopRun, SchedulerError> {
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(SchedulerError::InvalidHorizon(t_end));
    }
    mode.validate()?;
    opts.trigger.validate()?;
    let cap = 1.0 / speed.lambda0();
    let mut traj = Trajectory::new(profile0.clone(), speed.clone(), opts.solver)?;
    let mut log = EventLog::default();
    let mut reason = EventReason::Initial;
    let mut t_i = 0.0;
    let mut custom_next = 1;

    loop {
        let index = log.entries.len();
        let w_i = traj.w_at(t_i)?;
        let u_i = control_law(w_i, params.rho_s, speed);
        traj.begin_segment(u_i)?;
        let v_i = lyapunov_v(
            &traj.slice(t_i)?,
            params.rho_s,
            params.sigma,
            opts.trigger.scan_n,
        )?;
        let state = TriggerState {
            t_i,
            u_i,
            v_i,
            phi_at_ti: traj.phi_at(t_i)?,
        };

        let mut window = None;
        let robustness = |traj: &mut Trajectory| -> Result<f64, SchedulerError> {
            // G(ρ[tᵢ]) is the capped event-triggered gap from the current state.
            traj.advance_to(t_i + cap)?;
            let (e, _) = next_event(traj, &state, params, &opts.trigger)?;
            traj.truncate_to(t_i)?;
            Ok(e - t_i)
        };

        let (next, next_reason) = match mode {
            ScheduleMode::EventTriggered => {
                event_time(&mut traj, &state, params, &opts.trigger, cap, t_end)?
            }
            ScheduleMode::SampledData { period } => {
                ((index + 1) as f64 * period, EventReason::Sampled)
            }
            ScheduleMode::Custom { times } => {
                while custom_next < times.len() && times[custom_next] <= t_i {
                    custom_next += 1;
                }
                let next = times.get(custom_next).copied().unwrap_or(f64::INFINITY);
                if opts.verify_eq16 && next < t_end {
                    let g = robustness(&mut traj)?;
                    window = Some(g);
                    if next - t_i > g + opts.trigger.bisect_tol {
                        log.warnings.push(format!(
                            "gap {} after t={} exceeds the robustness window {}",
                            next - t_i,
                            t_i,
                            g
                        ));
                    }
                }
                (next, EventReason::Custom)
            }
            ScheduleMode::RobustFraction { fraction } => {
                let g = robustness(&mut traj)?;
                window = Some(g);
                (t_i + fraction * g, EventReason::Custom)
            }
        };

        let done = next >= t_end;
        let stop = next.min(t_end);
        if stop < traj.t_end() {
            traj.truncate_to(stop)?;
        } else {
            traj.advance_to(stop)?;
        }
        log.entries.push(EventEntry {
            index,
            t_i,
            u_i,
            v_i,
            w_i,
            phi_i: state.phi_at_ti,
            reason,
            gap: if done { None } else { Some(next - t_i) },
            robustness_window: window,
        });
        if done {
            break;
        }
        t_i = next;
        reason = next_reason;
    }

    Ok(ClosedLoopRun {
        trajectory: traj,
        log,
        params,
        mode: mode.clone(),
        options: *opts,
    })
}

/// Event time after `state.t_i`; returns a time ≥ `t_end` when the horizon comes first.
fn event_time(
    traj: &mut Trajectory,
    state: &TriggerState,
    params: ControllerParams,
    opts: &TriggerOptions,
    cap: f64,
    t_end: f64,
) -> Result<(f64, EventReason), SchedulerError> {
    let mut from = state.t_i;
    loop {
        let limit = if opts.eq8b_cap {
            state.t_i + cap
        } else {
            from + cap
        };
        let to = limit.min(t_end);
        traj.advance_to(to)?;
        if let Some(t) = scan_for_crossing(traj, state, params, from, to, opts)? {
            return Ok((t, EventReason::ThresholdCrossing));
        }
        if to >= t_end {
            return Ok((t_end, EventReason::MaxInterval));
        }
        if opts.eq8b_cap {
            return Ok((limit, EventReason::MaxInterval));
        }
        from = to;
    }
}

/// Half-open bin `(lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapStatistics {
    /// All completed gaps, grouped by family member in input order.
    pub gaps: Vec<f64>,
    pub events_per_member: Vec<usize>,
    pub bins: Vec<HistogramBin>,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl GapStatistics {
    /// Share of gaps inside the closed interval [lo, hi].
    pub fn fraction_within(&self, lo: f64, hi: f64) -> f64 {
        if self.gaps.is_empty() {
            return 0.0;
        }
        let n = self.gaps.iter().filter(|&&g| g >= lo && g <= hi).count();
        n as f64 / self.gaps.len() as f64
    }

    pub fn modal_bin(&self) -> Option<HistogramBin> {
        self.bins
            .iter()
            .copied()
            .reduce(|a, b| if b.count > a.count { b } else { a })
    }
}

/// Bins gaps into `(k·w, (k+1)·w]`; a gap equal to an edge (to 1e-9 relative)
/// goes to the lower bin, so a capped gap of exactly 1 counts in (0.9, 1].
pub fn histogram(gaps: &[f64], bin_width: f64) -> Vec<HistogramBin> {
    if gaps.is_empty() || !(bin_width > 0.0) {
        return Vec::new();
    }
    let index = |g: f64| ((g / bin_width - 1e-9).ceil() as usize).max(1) - 1;
    let top = gaps.iter().copied().map(index).max().unwrap_or(0);
    let mut bins: Vec<HistogramBin> = (0..=top)
        .map(|k| HistogramBin {
            lo: k as f64 * bin_width,
            hi: (k + 1) as f64 * bin_width,
            count: 0,
        })
        .collect();
    for &g in gaps {
        bins[index(g)].count += 1;
    }
    bins
}

/// Event-triggered runs over a family of initial profiles, pooled gap statistics.
/// Members run in parallel on the current rayon pool; results are merged in
/// family order.
pub fn interexecution_stats(
    family: &[DensityProfile],
    speed: &SpeedFunction,
    params: ControllerParams,
    t_end: f64,
    opts: &RunOptions,
    bin_width: f64,
) -> Result<GapStatistics, SchedulerError> {
    if family.is_empty() {
        return Err(SchedulerError::InvalidMode("empty profile family".into()));
    }
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(SchedulerError::InvalidMode(format!("bin_width={bin_width}")));
    }
    let per_member: Vec<Vec<f64>> = family
        .par_iter()
        .map(|p| {
            run_closed_loop(p, speed, params, &ScheduleMode::EventTriggered, t_end, opts)
                .map(|run| run.log.gaps())
        })
        .collect::<Result<_, _>>()?;
    let events_per_member = per_member.iter().map(|g| g.len() + 1).collect();
    let gaps: Vec<f64> = per_member.into_iter().flatten().collect();
    let (min, max, mean) = if gaps.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        (
            gaps.iter().copied().fold(f64::INFINITY, f64::min),
            gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            gaps.iter().sum::<f64>() / gaps.len() as f64,
        )
    };
    Ok(GapStatistics {
        bins: histogram(&gaps, bin_width),
        gaps,
        events_per_member,
        min,
        max,
        mean,
    })
}
