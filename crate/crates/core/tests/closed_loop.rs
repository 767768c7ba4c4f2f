use fabflow::controller::{
    boundary_deviation, decay_constant_from_sup, dwell_bound, global_estimate, initial_lyapunov,
    sup_log_deviation, trigger_threshold, ControllerParams, EventReason,
};
use fabflow::plant::{builtin_profile_paper, DensityProfile, SpeedFunction};
use fabflow::scheduler::{run_closed_loop, ClosedLoopRun, RunOptions, ScheduleMode};
use fabflow::transport::{Segment, Trajectory};

fn params(sigma: f64) -> ControllerParams {
    ControllerParams::new(1.0, sigma).unwrap()
}

fn run(profile: &DensityProfile, sigma: f64, mode: ScheduleMode, t_end: f64) -> ClosedLoopRun {
    run_closed_loop(
        profile,
        &SpeedFunction::hyperbolic(),
        params(sigma),
        &mode,
        t_end,
        &RunOptions::default(),
    )
    .unwrap()
}

/// A profile with a steep jump, so the trigger has something to react to.
fn jumpy() -> DensityProfile {
    DensityProfile::piecewise_constant(&[0.0, 0.3, 0.6], &[4.0, 0.3, 2.0]).unwrap()
}

#[test]
fn all_modes_hold_the_equilibrium() {
    let eq = DensityProfile::constant(1.0).unwrap();
    let modes = [
        ScheduleMode::EventTriggered,
        ScheduleMode::SampledData { period: 0.7 },
        ScheduleMode::Custom {
            times: vec![0.0, 0.2, 1.5, 3.0],
        },
        ScheduleMode::RobustFraction { fraction: 0.5 },
    ];
    for mode in modes {
        let r = run(&eq, 0.02, mode.clone(), 6.0);
        for k in 0..=60 {
            let t = 0.1 * k as f64;
            assert!((r.trajectory.w_at(t).unwrap() - 1.0).abs() < 1e-12, "{mode:?}");
            assert!((r.trajectory.density_at(t, 0.5).unwrap() - 1.0).abs() < 1e-12);
        }
        assert!(r.log.entries.iter().all(|e| e.v_i < 1e-12));
    }
}

#[test]
fn deviation_stays_below_threshold_between_events() {
    for (profile, sigma) in [(jumpy(), 2.0), (builtin_profile_paper(3.0).unwrap(), 0.02)] {
        let r = run(&profile, sigma, ScheduleMode::EventTriggered, 12.0);
        let speed = r.trajectory.speed().clone();
        for (i, e) in r.log.entries.iter().enumerate() {
            let state = r.trigger_state(i);
            let end = e.gap.map_or(r.t_end(), |g| e.t_i + g);
            for k in 1..50 {
                let tau = e.t_i + (end - e.t_i) * k as f64 / 50.0;
                let dev = boundary_deviation(&state, r.trajectory.w_at(tau).unwrap(), &speed, 1.0);
                let thr = trigger_threshold(&state, r.trajectory.phi_at(tau).unwrap(), sigma);
                assert!(dev <= thr + 1e-9, "interval {i} τ={tau}: {dev} > {thr}");
            }
        }
    }
}

#[test]
fn threshold_events_sit_on_the_threshold() {
    let sigma = 2.0;
    let r = run(&jumpy(), sigma, ScheduleMode::EventTriggered, 12.0);
    let crossings: Vec<usize> = (1..r.log.len())
        .filter(|&i| r.log.entries[i].reason == EventReason::ThresholdCrossing)
        .collect();
    assert!(!crossings.is_empty(), "expected at least one threshold crossing");
    let speed = r.trajectory.speed().clone();
    for i in crossings {
        let prev = r.trigger_state(i - 1);
        let t = r.log.entries[i].t_i;
        let dev = boundary_deviation(&prev, r.trajectory.w_at(t).unwrap(), &speed, 1.0);
        let thr = trigger_threshold(&prev, r.trajectory.phi_at(t).unwrap(), sigma);
        assert!(dev >= thr - 1e-6, "event {i}: {dev} vs {thr}");
    }
}

#[test]
fn gaps_respect_the_dwell_bound() {
    let k = SpeedFunction::hyperbolic().lipschitz_k();
    for (profile, sigma) in [(jumpy(), 2.0), (builtin_profile_paper(20.0).unwrap(), 0.02)] {
        let r = run(&profile, sigma, ScheduleMode::EventTriggered, 15.0);
        for e in &r.log.entries {
            if let Some(gap) = e.gap {
                assert!(gap >= dwell_bound(e.v_i, sigma, k, 1.0) - 1e-7);
                assert!(gap <= 1.0 + 1e-12);
            }
        }
    }
}

#[test]
fn sampling_within_the_dwell_bound_obeys_the_global_estimate() {
    let speed = SpeedFunction::hyperbolic();
    let sigma = 0.1;
    for profile in [jumpy(), builtin_profile_paper(7.0).unwrap()] {
        let p = params(sigma);
        let sup0 = sup_log_deviation(&profile, 1.0, 2001).unwrap();
        let r_bound = sigma.exp() * sup0;
        let tau = dwell_bound(r_bound, sigma, speed.lipschitz_k(), 1.0);
        let c = decay_constant_from_sup(sup0, p, &speed);
        let r = run(&profile, sigma, ScheduleMode::SampledData { period: tau }, 20.0);
        for k in 0..=80 {
            let t = 0.25 * k as f64;
            let sup = sup_log_deviation(&r.trajectory.slice(t).unwrap(), 1.0, 1001).unwrap();
            assert!(sup <= global_estimate(t, c, sigma, sup0) + 1e-9, "t={t}");
        }
        let v0 = initial_lyapunov(&profile, p, 2001).unwrap();
        assert!(r.log.entries[0].v_i <= v0 + 1e-12);
    }
}

#[test]
fn closed_loop_replays_as_open_loop_segments() {
    let r = run(&jumpy(), 2.0, ScheduleMode::EventTriggered, 8.0);
    let segments: Vec<Segment> = r
        .log
        .entries
        .iter()
        .map(|e| Segment {
            start: e.t_i,
            input: e.u_i,
        })
        .collect();
    let replay = Trajectory::with_segments(
        jumpy(),
        SpeedFunction::hyperbolic(),
        &segments,
        8.0,
        Default::default(),
    )
    .unwrap();
    for k in 0..=80 {
        let t = 0.1 * k as f64;
        let a = r.trajectory.w_at(t).unwrap();
        let b = replay.w_at(t).unwrap();
        assert!((a - b).abs() < 1e-10, "t={t}: {a} vs {b}");
    }
}

#[test]
fn custom_times_matching_sampling_reproduce_it() {
    let profile = builtin_profile_paper(4.0).unwrap();
    let sampled = run(&profile, 0.02, ScheduleMode::SampledData { period: 0.5 }, 5.0);
    let times: Vec<f64> = (0..10).map(|k| 0.5 * k as f64).collect();
    let custom = run(&profile, 0.02, ScheduleMode::Custom { times }, 5.0);
    assert_eq!(sampled.log.len(), custom.log.len());
    for (a, b) in sampled.log.entries.iter().zip(&custom.log.entries) {
        assert_eq!(a.t_i, b.t_i);
        assert!((a.u_i - b.u_i).abs() < 1e-13);
    }
}

#[test]
fn custom_schedule_flags_gaps_beyond_the_robustness_window() {
    let opts = RunOptions {
        verify_eq16: true,
        ..Default::default()
    };
    let r = run_closed_loop(
        &jumpy(),
        &SpeedFunction::hyperbolic(),
        params(0.5),
        &ScheduleMode::Custom {
            times: vec![0.0, 3.0, 3.1],
        },
        4.0,
        &opts,
    )
    .unwrap();
    assert!(r.log.entries[0].robustness_window.unwrap() <= 1.0);
    assert!(!r.log.warnings.is_empty());
}
