//! The acceptance suite: twelve numerical checks of the closed loop, each with a
//! measured value and the bound it is held to. Shared scenario runs are computed
//! once per suite.

use std::fmt;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::controller::{
    decay_constant, decay_constant_from_sup, dwell_bound, global_estimate, lyapunov_v,
    sup_log_deviation, trigger_threshold, ControllerParams, GuaranteeConstants,
};
use crate::plant::{builtin_profile_paper, DensityProfile, SpeedFunction};
use crate::quadrature::GaussLegendre;
use crate::scheduler::{
    interexecution_stats, run_closed_loop, ClosedLoopRun, GapStatistics, RunOptions, ScheduleMode,
};
use crate::transport::{rk_oracle, Segment};

pub const CRITERIA: [u32; 12] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12];

/// Reference controller: ρ_s = 1, σ = 0.02.
pub const REFERENCE_PARAMS: ControllerParams = ControllerParams {
    rho_s: 1.0,
    sigma: 0.02,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub measured: f64,
    pub bound: f64,
    pub detail: String,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{:.6e}\t{:.6e}\t{}: {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.measured,
            self.bound,
            self.name,
            self.detail
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcceptanceOptions {
    pub run: RunOptions,
    /// Family parameters l for the gap statistics.
    pub family_l: Vec<f64>,
    pub stats_t_end: f64,
    pub seed: u64,
}

impl Default for AcceptanceOptions {
    fn default() -> Self {
        Self {
            run: RunOptions::default(),
            family_l: (1..=100).map(f64::from).collect(),
            stats_t_end: 40.0,
            seed: 0x5eed_f10e,
        }
    }
}

type Cached<T> = OnceLock<Result<T, String>>;

pub struct Acceptance {
    opts: AcceptanceOptions,
    speed: SpeedFunction,
    profile: DensityProfile,
    reference_event: Cached<ClosedLoopRun>,
    constants: Cached<GuaranteeConstants>,
    stats_fast: Cached<GapStatistics>,
    stats_slow_uncapped: Cached<GapStatistics>,
}

fn fail(id: u32, name: &'static str, err: String) -> CriterionResult {
    CriterionResult {
        id,
        name,
        passed: false,
        measured: f64::NAN,
        bound: f64::NAN,
        detail: format!("error: {err}"),
    }
}

fn get<T>(cell: &Cached<T>, init: impl FnOnce() -> Result<T, String>) -> Result<&T, String> {
    cell.get_or_init(init).as_ref().map_err(Clone::clone)
}

impl Acceptance {
    pub fn new(opts: AcceptanceOptions) -> Self {
        Self {
            opts,
            speed: SpeedFunction::hyperbolic(),
            profile: builtin_profile_paper(0.0).expect("reference profile"),
            reference_event: OnceLock::new(),
            constants: OnceLock::new(),
            stats_fast: OnceLock::new(),
            stats_slow_uncapped: OnceLock::new(),
        }
    }

    pub fn options(&self) -> &AcceptanceOptions {
        &self.opts
    }

    /// Event-triggered reference run on [0, 40].
    pub fn reference_event_run(&self) -> Result<&ClosedLoopRun, String> {
        get(&self.reference_event, || {
            run_closed_loop(
                &self.profile,
                &self.speed,
                REFERENCE_PARAMS,
                &ScheduleMode::EventTriggered,
                40.0,
                &self.opts.run,
            )
            .map_err(|e| e.to_string())
        })
    }

    pub fn constants(&self) -> Result<&GuaranteeConstants, String> {
        get(&self.constants, || {
            crate::controller::guarantee_constants(
                &self.profile,
                REFERENCE_PARAMS,
                &self.speed,
                &self.opts.run.solver,
                &self.opts.run.trigger,
            )
            .map_err(|e| e.to_string())
        })
    }

    fn family(&self) -> Result<Vec<DensityProfile>, String> {
        self.opts
            .family_l
            .iter()
            .map(|&l| builtin_profile_paper(l).map_err(|e| e.to_string()))
            .collect()
    }

    fn stats_fast(&self) -> Result<&GapStatistics, String> {
        get(&self.stats_fast, || {
            interexecution_stats(
                &self.family()?,
                &self.speed,
                REFERENCE_PARAMS,
                self.opts.stats_t_end,
                &self.opts.run,
                0.1,
            )
            .map_err(|e| e.to_string())
        })
    }

    fn stats_slow_uncapped(&self) -> Result<&GapStatistics, String> {
        get(&self.stats_slow_uncapped, || {
            let mut run = self.opts.run;
            run.trigger.eq8b_cap = false;
            interexecution_stats(
                &self.family()?,
                &self.speed,
                ControllerParams {
                    rho_s: 1.0,
                    sigma: 0.006,
                },
                self.opts.stats_t_end,
                &run,
                0.1,
            )
            .map_err(|e| e.to_string())
        })
    }

    /// Named reference constants printed alongside the report.
    pub fn info(&self) -> Vec<(&'static str, f64)> {
        let mut out = Vec::new();
        if let Ok(c) = self.constants() {
            out.push(("c(rho0)", c.c_rho0));
            out.push(("T_tilde(0)", c.t_tilde_of_0));
            out.push(("V0", c.v0));
            out.push(("T_tilde(V0)", c.t_tilde_of_v0));
            out.push(("G(rho0)", c.g_rho0));
        }
        out
    }

    pub fn run(&self, ids: &[u32]) -> Vec<CriterionResult> {
        ids.iter().map(|&id| self.criterion(id)).collect()
    }

    pub fn criterion(&self, id: u32) -> CriterionResult {
        let (name, result) = match id {
            1 => ("equilibrium fixed point", self.c1_equilibrium()),
            2 => ("oracle equivalence", self.c2_oracle()),
            3 => ("mass balance", self.c3_mass_balance()),
            4 => ("Lyapunov decay per interval", self.c4_lyapunov_decay()),
            5 => ("global estimate", self.c5_global_estimate()),
            6 => ("dwell-time bound", self.c6_dwell()),
            7 => ("gap cap", self.c7_cap()),
            8 => ("inter-execution statistics", self.c8_statistics()),
            9 => ("robust event sequences", self.c9_robust_sequence()),
            10 => ("sampled-data stabilization", self.c10_sampled()),
            11 => ("Zeno-freeness", self.c11_zeno()),
            12 => ("scale invariance of V", self.c12_scale_invariance()),
            _ => ("unknown", Err(format!("no criterion {id}"))),
        };
        match result {
            Ok((passed, measured, bound, detail)) => CriterionResult {
                id,
                name,
                passed,
                measured,
                bound,
                detail,
            },
            Err(e) => fail(id, name, e),
        }
    }
}

type Outcome = Result<(bool, f64, f64, String), String>;

fn s<E: fmt::Display>(e: E) -> String {
    e.to_string()
}

/// sup_x |ln(ρ(t,x)/ρ_s)| at every multiple of `dt` up to `t_end`, minus the
/// global bound; returns the largest excess and where it occurs.
fn global_estimate_excess(
    run: &ClosedLoopRun,
    c: f64,
    sup0: f64,
    dt: f64,
) -> Result<(f64, f64), String> {
    let n = (run.t_end() / dt).round() as usize;
    let excess: Vec<(f64, f64)> = (0..=n)
        .into_par_iter()
        .map(|k| {
            let t = (k as f64 * dt).min(run.t_end());
            let slice = run.trajectory.slice(t).map_err(s)?;
            let dev = sup_log_deviation(&slice, run.params.rho_s, run.options.trigger.scan_n)
                .map_err(s)?;
            Ok((dev - global_estimate(t, c, run.params.sigma, sup0), t))
        })
        .collect::<Result<_, String>>()?;
    Ok(excess
        .into_iter()
        .fold((f64::NEG_INFINITY, 0.0), |a, b| if b.0 > a.0 { b } else { a }))
}

impl Acceptance {
    fn c1_equilibrium(&self) -> Outcome {
        let flat = DensityProfile::constant(1.0).map_err(s)?;
        let modes = [
            ScheduleMode::EventTriggered,
            ScheduleMode::SampledData { period: 0.7 },
            ScheduleMode::Custom {
                times: vec![0.0, 0.3, 1.9, 2.0, 4.5, 9.0, 9.5, 13.25],
            },
            ScheduleMode::RobustFraction { fraction: 0.9 },
        ];
        let mut worst = 0.0_f64;
        for mode in &modes {
            let run = run_closed_loop(&flat, &self.speed, REFERENCE_PARAMS, mode, 20.0, &self.opts.run)
                .map_err(s)?;
            let traj = &run.trajectory;
            for w in traj.w_samples() {
                worst = worst.max((w - 1.0).abs());
            }
            for k in 0..=200 {
                let t = k as f64 * 0.1;
                for j in 0..=100 {
                    let rho = traj.density_at(t, j as f64 / 100.0).map_err(s)?;
                    worst = worst.max((rho - 1.0).abs());
                }
            }
        }
        Ok((
            worst <= 1e-9,
            worst,
            1e-9,
            "max |rho-1| and |W-1| over four schedules, t_end=20".into(),
        ))
    }

    fn c2_oracle(&self) -> Outcome {
        let run = self.reference_event_run()?;
        let t_end = 10.0;
        let segments: Vec<Segment> = run
            .trajectory
            .segments()
            .iter()
            .copied()
            .filter(|g| g.start < t_end)
            .collect();
        let oracle = rk_oracle(&self.profile, &self.speed, &segments, t_end, 1e-3).map_err(s)?;
        let mut worst = 0.0_f64;
        for (t, w) in oracle.times.iter().zip(&oracle.w) {
            worst = worst.max((run.trajectory.w_at(*t).map_err(s)? - w).abs());
        }
        Ok((
            worst <= 1e-6,
            worst,
            1e-6,
            format!(
                "sup |W_picard - W_rk4| on [0,{t_end}], {} oracle steps",
                oracle.times.len() - 1
            ),
        ))
    }

    fn c3_mass_balance(&self) -> Outcome {
        let traj = &self.reference_event_run()?.trajectory;
        let t_end = 10.0;
        let cuts: Vec<f64> = traj
            .discontinuity_times()
            .into_iter()
            .filter(|&t| t < t_end)
            .collect();
        let gl = GaussLegendre::new(16);
        let integrand = |t: f64| -> f64 {
            let u = traj.input_at(t).unwrap_or(f64::NAN);
            u - traj.outflux(t).unwrap_or(f64::NAN)
        };
        let integral = |a: f64, b: f64| -> f64 {
            let mut edges = vec![a];
            edges.extend(cuts.iter().copied().filter(|&c| c > a && c < b));
            edges.push(b);
            edges
                .windows(2)
                .map(|w| {
                    let panels = ((w[1] - w[0]) / 0.05).ceil().max(1.0) as usize;
                    gl.integrate_composite(w[0], w[1], panels, integrand)
                })
                .sum()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.opts.seed);
        let pairs: Vec<(f64, f64)> = (0..100)
            .map(|_| {
                let a: f64 = rng.gen_range(0.0..t_end);
                let b: f64 = rng.gen_range(0.0..t_end);
                (a.min(b), a.max(b))
            })
            .collect();
        let worst = pairs
            .par_iter()
            .map(|&(a, b)| {
                let dw = traj.w_at(b).unwrap_or(f64::NAN) - traj.w_at(a).unwrap_or(f64::NAN);
                (dw - integral(a, b)).abs()
            })
            .reduce(|| 0.0, f64::max);
        Ok((
            worst <= 1e-6,
            worst,
            1e-6,
            "max |dW - int(u - y)| over 100 random intervals in [0,10]".into(),
        ))
    }

    fn c4_lyapunov_decay(&self) -> Outcome {
        let run = self.reference_event_run()?;
        let entries = &run.log.entries;
        let worst = (0..entries.len())
            .into_par_iter()
            .map(|i| -> Result<f64, String> {
                let state = run.trigger_state(i);
                let end = entries.get(i + 1).map_or(run.t_end(), |e| e.t_i);
                let mut worst = f64::NEG_INFINITY;
                for k in 0..50 {
                    let t = state.t_i + (end - state.t_i) * k as f64 / 49.0;
                    let slice = run.trajectory.slice(t).map_err(s)?;
                    let v = lyapunov_v(
                        &slice,
                        run.params.rho_s,
                        run.params.sigma,
                        run.options.trigger.scan_n,
                    )
                    .map_err(s)?;
                    worst = worst.max(v - trigger_threshold(&state, slice.phi(), run.params.sigma));
                }
                Ok(worst)
            })
            .collect::<Result<Vec<f64>, String>>()?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        Ok((
            worst <= 1e-4,
            worst,
            1e-4,
            format!(
                "max V(t) - exp(-sigma dPhi) V(t_i), 50 probes on each of {} intervals",
                entries.len()
            ),
        ))
    }

    fn c5_global_estimate(&self) -> Outcome {
        let run = self.reference_event_run()?;
        let scan_n = run.options.trigger.scan_n;
        let c = decay_constant(&self.profile, REFERENCE_PARAMS, &self.speed, scan_n).map_err(s)?;
        let brute_sup = (0..=1_000_000)
            .map(|k| self.profile.eval(k as f64 * 1e-6).ln().abs())
            .fold(0.0, f64::max);
        let c_brute = decay_constant_from_sup(brute_sup, REFERENCE_PARAMS, &self.speed);
        let sup0 = sup_log_deviation(&self.profile, 1.0, scan_n).map_err(s)?;
        let (excess, at) = global_estimate_excess(run, c, sup0, 0.1)?;
        let agree = (c - c_brute).abs() <= 1e-9;
        Ok((
            excess <= 1e-4 && agree,
            excess,
            1e-4,
            format!(
                "max sup|ln rho| - bound over t<=40 (worst at t={at:.1}); c={c:.9} (brute force {c_brute:.9})"
            ),
        ))
    }

    fn c6_dwell(&self) -> Outcome {
        let run = self.reference_event_run()?;
        let k = self.speed.lipschitz_k();
        let cap = 1.0 / self.speed.lambda0();
        let mut worst = f64::INFINITY;
        let mut late_min = f64::INFINITY;
        for e in &run.log.entries {
            if let Some(gap) = e.gap {
                let bound = cap.min(dwell_bound(e.v_i, REFERENCE_PARAMS.sigma, k, 1.0));
                worst = worst.min(gap - bound);
                if e.t_i >= 20.0 {
                    late_min = late_min.min(gap);
                }
            }
        }
        let t0 = dwell_bound(0.0, REFERENCE_PARAMS.sigma, k, 1.0);
        let late_ok = late_min >= cap.min(t0) - 1e-6;
        Ok((
            worst >= -1e-6 && late_ok,
            worst,
            -1e-6,
            format!(
                "min gap - min(1/lambda(0), T(V_i)); T(0)={t0:.7}; smallest gap after t=20: {late_min:.7}"
            ),
        ))
    }

    fn c7_cap(&self) -> Outcome {
        let run = self.reference_event_run()?;
        let stats = self.stats_fast()?;
        let tol = self.opts.run.trigger.bisect_tol;
        let max = run.log.gaps().into_iter().chain(stats.gaps.iter().copied()).fold(0.0, f64::max);
        let bound = 1.0 / self.speed.lambda0() + tol;
        Ok((
            max <= bound,
            max,
            bound,
            format!(
                "largest gap of the reference run and {} family runs",
                stats.events_per_member.len()
            ),
        ))
    }

    fn c8_statistics(&self) -> Outcome {
        let fast = self.stats_fast()?;
        let slow = self.stats_slow_uncapped()?;
        let frac = fast.fraction_within(0.6, 1.0);
        let beyond_cap = slow.gaps.iter().filter(|&&g| g > 1.0).count();
        let reaches_two = slow.max >= 2.0;
        let slow_frac = slow.fraction_within(0.6, 2.0);
        Ok((
            frac >= 0.6 && reaches_two,
            frac,
            0.6,
            format!(
                "share of {} gaps in [0.6,1] at sigma=0.02; sigma=0.006 without cap: {} gaps, {} above 1, max {:.3}, share in [0.6,2] {:.3}",
                fast.gaps.len(),
                slow.gaps.len(),
                beyond_cap,
                slow.max,
                slow_frac
            ),
        ))
    }

    fn c9_robust_sequence(&self) -> Outcome {
        let run = run_closed_loop(
            &self.profile,
            &self.speed,
            REFERENCE_PARAMS,
            &ScheduleMode::RobustFraction { fraction: 0.9 },
            40.0,
            &self.opts.run,
        )
        .map_err(s)?;
        let scan_n = run.options.trigger.scan_n;
        let c = decay_constant(&self.profile, REFERENCE_PARAMS, &self.speed, scan_n).map_err(s)?;
        let sup0 = sup_log_deviation(&self.profile, 1.0, scan_n).map_err(s)?;
        let (excess, at) = global_estimate_excess(&run, c, sup0, 0.1)?;
        Ok((
            excess <= 1e-4,
            excess,
            1e-4,
            format!(
                "gaps 0.9 G(rho[t_i]), {} events; worst at t={at:.1}",
                run.log.len()
            ),
        ))
    }

    fn c10_sampled(&self) -> Outcome {
        let finals: Vec<f64> = [1.0, 2.5]
            .par_iter()
            .map(|&period| {
                let run = run_closed_loop(
                    &self.profile,
                    &self.speed,
                    REFERENCE_PARAMS,
                    &ScheduleMode::SampledData { period },
                    60.0,
                    &self.opts.run,
                )
                .map_err(s)?;
                let slice = run.trajectory.slice(60.0).map_err(s)?;
                sup_log_deviation(&slice, 1.0, run.options.trigger.scan_n).map_err(s)
            })
            .collect::<Result<_, String>>()?;
        let (fast, slow) = (finals[0], finals[1]);
        Ok((
            fast < 0.05 && slow < 0.05 && fast < slow,
            fast.max(slow),
            0.05,
            format!("sup|ln rho(60,.)|: period 1 -> {fast:.3e}, period 2.5 -> {slow:.3e}"),
        ))
    }

    fn c11_zeno(&self) -> Outcome {
        let run = self.reference_event_run()?;
        let consts = self.constants()?;
        let bound = 40.0 / (1.0 / self.speed.lambda0()).min(consts.t_tilde_of_v0) + 1.0;
        let count = run.log.len() as f64;
        Ok((
            count <= bound,
            count,
            bound,
            "events on [0,40] vs 40/min(1/lambda(0), T(V0)) + 1".into(),
        ))
    }

    fn c12_scale_invariance(&self) -> Outcome {
        let mut rng = ChaCha8Rng::seed_from_u64(self.opts.seed ^ 12);
        let mut worst = 0.0_f64;
        for _ in 0..20 {
            let knots = rng.gen_range(2..10);
            let mut xs: Vec<f64> = (0..knots - 2).map(|_| rng.gen_range(0.01..0.99)).collect();
            xs.push(0.0);
            xs.push(1.0);
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            let values: Vec<f64> = xs.iter().map(|_| rng.gen_range(0.05..20.0)).collect();
            let rho_s = rng.gen_range(0.2..5.0);
            let sigma = rng.gen_range(0.001..0.5);
            let base = DensityProfile::piecewise_linear(&xs, &values).map_err(s)?;
            let v = lyapunov_v(&base, rho_s, sigma, 2001).map_err(s)?;
            for c in [0.5, 2.0, 10.0] {
                let scaled: Vec<f64> = values.iter().map(|r| r * c).collect();
                let p = DensityProfile::piecewise_linear(&xs, &scaled).map_err(s)?;
                let vc = lyapunov_v(&p, rho_s * c, sigma, 2001).map_err(s)?;
                worst = worst.max((vc - v).abs());
            }
        }
        Ok((
            worst <= 1e-12,
            worst,
            1e-12,
            "max |V(c rho, c rho_s) - V(rho, rho_s)|, 20 random profiles, c in {0.5,2,10}".into(),
        ))
    }
}
