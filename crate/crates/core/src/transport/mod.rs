//! Exact solution of the transport problem for piecewise-constant influx.
//!
//! Every particle in the line carries a label ζ: particles that were present at
//! t = 0 at stage x₀ have ζ = −x₀, particles that entered through x = 0 when the
//! travelled distance was Φ(t̃) have ζ = Φ(t̃). The label of the particle at
//! (t, x) is `Φ(t) − x`, so the whole state is one fixed label density `R(ζ)`
//! viewed through a sliding window `[Φ(t) − 1, Φ(t)]`:
//!
//! ```text
//! R(ζ) = ρ₀(−ζ)          ζ < 0
//! R(ζ) = u(t̃)/λ(W(t̃))    ζ = Φ(t̃) ≥ 0
//! ```
//!
//! and the work in progress is `W(t) = C(Φ(t)) − C(Φ(t) − 1)` with `C` the
//! cumulative label mass (`C(Φ(t̃)) = ∫₀^t̃ u`). The solver only has to produce
//! Φ; it does so window by window with a Picard iteration on W, each window no
//! longer than the contraction bound `1/(λ(0) + K·ρ_max)` and ending wherever a
//! jump of `R` reaches x = 1, so that W is smooth inside every window.

mod hermite;
pub mod oracle;
mod window;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plant::{DensityProfile, DensityView, Jump, SpeedFunction};
use hermite::{hermite, invert_hermite};
use window::{solve_window, StartState, WindowSolution, WindowSpec};

pub use oracle::{rk_oracle, OracleSolution};

/// Label distance under which two breakpoints are treated as the same point.
const LABEL_EPS: f64 = 1e-12;
/// Accuracy of the landing of a window end on a label breakpoint.
const LANDING_TOL: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("out of horizon: t={t} not in [0, {end}]")]
    OutOfHorizon { t: f64, end: f64 },
    #[error("stage x={0} is outside [0, 1]")]
    InvalidStage(f64),
    #[error("picard divergence on window at t={t_start}: residual {residual:e} after {iterations} iterations")]
    PicardDivergence {
        t_start: f64,
        iterations: usize,
        residual: f64,
    },
    #[error("work in progress W={w} at t={t} exceeds the ceiling {ceiling}")]
    BlowUp { t: f64, w: f64, ceiling: f64 },
    #[error("influx must be positive and finite, got {0}")]
    InvalidInput(f64),
    #[error("invalid solver option: {0}")]
    InvalidOption(String),
    #[error("no influx segment has been started")]
    NoSegment,
    #[error("cannot move the trajectory end to t={target}: {reason}")]
    InvalidTarget { target: f64, reason: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Internal grid step.
    pub h: f64,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    /// Tolerance, in Φ units, for solving Φ(t) − Φ(t̃) = x.
    pub backtrack_tol: f64,
    /// Points used to measure sup ρ at each window start.
    pub sup_scan_n: usize,
    /// W above this aborts the solve.
    pub w_ceiling: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            h: 1e-3,
            picard_tol: 1e-12,
            picard_max_iter: 200,
            backtrack_tol: 1e-10,
            sup_scan_n: 1024,
            w_ceiling: 1e6,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), TransportError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.h) {
            return Err(TransportError::InvalidOption(format!("h={}", self.h)));
        }
        if !positive(self.picard_tol) {
            return Err(TransportError::InvalidOption(format!(
                "picard_tol={}",
                self.picard_tol
            )));
        }
        if self.picard_max_iter == 0 {
            return Err(TransportError::InvalidOption("picard_max_iter=0".into()));
        }
        if !positive(self.backtrack_tol) {
            return Err(TransportError::InvalidOption(format!(
                "backtrack_tol={}",
                self.backtrack_tol
            )));
        }
        if self.sup_scan_n < 2 {
            return Err(TransportError::InvalidOption("sup_scan_n < 2".into()));
        }
        if !positive(self.w_ceiling) {
            return Err(TransportError::InvalidOption(format!(
                "w_ceiling={}",
                self.w_ceiling
            )));
        }
        Ok(())
    }
}

/// Contraction window `1/(λ(0) + K·ρ_max)`.
pub fn contraction_window(speed: &SpeedFunction, rho_max: f64) -> f64 {
    1.0 / (speed.lambda0() + speed.lipschitz_k() * rho_max)
}

/// Constant influx `input` from `start` until the next segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub input: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Node {
    t: f64,
    w: f64,
    phi: f64,
    /// W' from the left and from the right; they differ where a jump of ρ leaves the line.
    dw_in: f64,
    dw_out: f64,
}

/// One stored grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub w: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveStats {
    pub windows: usize,
    pub picard_iterations: usize,
    pub max_residual: f64,
    pub kink_landings: usize,
}

/// Where the characteristic through (t, x) comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BacktrackResult {
    /// Entry time through x = 0, or 0 for material of the initial profile.
    pub t_tilde: f64,
    pub from_boundary: bool,
    /// Position in the initial profile when `from_boundary` is false.
    pub initial_position: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LabelPiece {
    Initial(usize),
    Boundary(usize),
}

/// Closed-loop or open-loop solution record.
#[derive(Debug, Clone)]
pub struct Trajectory {
    profile0: DensityProfile,
    speed: SpeedFunction,
    opts: SolverOptions,
    nodes: Vec<Node>,
    segments: Vec<Segment>,
    seg_phi: Vec<f64>,
    seg_cum: Vec<f64>,
    /// −ξᵢ for i ≥ 1, ascending.
    neg_xi: Vec<f64>,
    /// Φ at which W' jumped; those labels carry a jump of R' and produce a W''
    /// jump one transit later.
    kink_phi: Vec<f64>,
    /// Times at which a jump of ρ or of ρ_x left through x = 1.
    exit_times: Vec<f64>,
    stats: SolveStats,
}

impl Trajectory {
    pub fn new(
        profile0: DensityProfile,
        speed: SpeedFunction,
        opts: SolverOptions,
    ) -> Result<Self, TransportError> {
        opts.validate()?;
        let w0 = profile0.total_mass();
        let mut neg_xi: Vec<f64> = profile0.breakpoints()[1..].iter().map(|x| -x).collect();
        neg_xi.reverse();
        Ok(Self {
            profile0,
            speed,
            opts,
            nodes: vec![Node {
                t: 0.0,
                w: w0,
                phi: 0.0,
                dw_in: f64::NAN,
                dw_out: f64::NAN,
            }],
            segments: Vec::new(),
            seg_phi: Vec::new(),
            seg_cum: Vec::new(),
            neg_xi,
            kink_phi: Vec::new(),
            exit_times: Vec::new(),
            stats: SolveStats::default(),
        })
    }

    /// Solves [0, t_end] with one constant influx.
    pub fn open_loop(
        profile0: DensityProfile,
        speed: SpeedFunction,
        input: f64,
        t_end: f64,
        opts: SolverOptions,
    ) -> Result<Self, TransportError> {
        let mut traj = Self::new(profile0, speed, opts)?;
        traj.begin_segment(input)?;
        traj.advance_to(t_end)?;
        Ok(traj)
    }

    /// Replays a given input sequence up to `t_end`.
    pub fn with_segments(
        profile0: DensityProfile,
        speed: SpeedFunction,
        segments: &[Segment],
        t_end: f64,
        opts: SolverOptions,
    ) -> Result<Self, TransportError> {
        let mut traj = Self::new(profile0, speed, opts)?;
        for (k, seg) in segments.iter().enumerate() {
            if seg.start >= t_end {
                break;
            }
            if seg.start != traj.t_end() {
                return Err(TransportError::InvalidTarget {
                    target: seg.start,
                    reason: "segment starts must begin at 0 and increase",
                });
            }
            traj.begin_segment(seg.input)?;
            let stop = segments.get(k + 1).map_or(t_end, |s| s.start.min(t_end));
            traj.advance_to(stop)?;
        }
        Ok(traj)
    }

    pub fn profile0(&self) -> &DensityProfile {
        &self.profile0
    }

    pub fn speed(&self) -> &SpeedFunction {
        &self.speed
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn stats(&self) -> SolveStats {
        self.stats
    }

    pub fn t_end(&self) -> f64 {
        self.nodes.last().unwrap().t
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn samples(&self) -> impl Iterator<Item = Sample> + '_ {
        self.nodes.iter().map(|n| Sample {
            t: n.t,
            w: n.w,
            phi: n.phi,
        })
    }

    pub fn times(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.t).collect()
    }

    pub fn w_samples(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.w).collect()
    }

    pub fn phi_samples(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.phi).collect()
    }

    /// Starts a new constant-influx segment at the current end time.
    pub fn begin_segment(&mut self, input: f64) -> Result<(), TransportError> {
        if !(input.is_finite() && input > 0.0) {
            return Err(TransportError::InvalidInput(input));
        }
        let t = self.t_end();
        let phi = self.nodes.last().unwrap().phi;
        if let Some(last) = self.segments.last_mut() {
            if last.start == t {
                last.input = input;
                return Ok(());
            }
        }
        let cum = self.cumulative_input(t);
        self.segments.push(Segment { start: t, input });
        self.seg_phi.push(phi);
        self.seg_cum.push(cum);
        Ok(())
    }

    /// Extends the solution to `target` with the active input.
    pub fn advance_to(&mut self, target: f64) -> Result<(), TransportError> {
        if self.segments.is_empty() {
            return Err(TransportError::NoSegment);
        }
        if !target.is_finite() || target < self.t_end() {
            return Err(TransportError::InvalidTarget {
                target,
                reason: "target precedes the current end",
            });
        }
        while self.t_end() < target {
            self.solve_next_window(target)?;
        }
        Ok(())
    }

    /// Cuts the solution back to `t` (not earlier than the active segment start)
    /// and re-solves the last partial window so the record ends exactly at `t`.
    pub fn truncate_to(&mut self, t: f64) -> Result<(), TransportError> {
        let seg_start = self.segments.last().map_or(0.0, |s| s.start);
        if !(t >= seg_start && t <= self.t_end()) {
            return Err(TransportError::InvalidTarget {
                target: t,
                reason: "truncation outside the active segment",
            });
        }
        let keep = self.nodes.partition_point(|n| n.t <= t).max(1);
        self.nodes.truncate(keep);
        let phi_end = self.nodes.last().unwrap().phi;
        self.kink_phi.retain(|&p| p <= phi_end + LABEL_EPS);
        let t_keep = self.t_end();
        self.exit_times.retain(|&s| s <= t_keep);
        if self.t_end() < t {
            self.advance_to(t)?;
        }
        Ok(())
    }

    fn solve_next_window(&mut self, target: f64) -> Result<(), TransportError> {
        let k = self.nodes.len() - 1;
        let node = self.nodes[k];
        let seg = *self.segments.last().unwrap();
        let zeta0 = node.phi - 1.0;
        let rho_max = self.label_sup(zeta0, node.phi, self.opts.sup_scan_n);
        let cap = contraction_window(&self.speed, rho_max);
        let remaining = target - node.t;
        let full_len = cap.min(remaining);
        let piece = self.piece_right(zeta0);
        let jump = self.next_breakpoint_after(zeta0);
        let kink = self
            .kink_phi
            .iter()
            .copied()
            .find(|&b| b > zeta0 + LABEL_EPS);
        let critical = match (jump, kink) {
            (Some(a), Some(b)) => Some(1.0 + a.min(b)),
            (a, b) => a.or(b).map(|b| 1.0 + b),
        };
        let from_jump = jump.is_some_and(|a| kink.is_none_or(|b| a <= b + LABEL_EPS));

        let mut sol = self.solve_window_from(k, seg.input, piece, full_len)?;
        let mut len = full_len;
        let mut landed = false;
        if let Some(c) = critical {
            if node.phi + sol.phi_end() > c + LANDING_TOL {
                // Land the window end on the Φ where the jump reaches x = 1.
                len = crossing_offset(&self.speed, &sol, c - node.phi);
                for _ in 0..30 {
                    sol = self.solve_window_from(k, seg.input, piece, len)?;
                    let err = node.phi + sol.phi_end() - c;
                    if err.abs() <= LANDING_TOL {
                        break;
                    }
                    len -= err / self.speed.value(sol.w_end());
                    len = len.clamp(f64::MIN_POSITIVE, full_len);
                }
                landed = true;
            }
        }

        self.stats.windows += 1;
        self.stats.picard_iterations += sol.iterations;
        self.stats.max_residual = self.stats.max_residual.max(sol.residual);
        if landed {
            self.stats.kink_landings += 1;
        }

        let snap_to_target = !landed && len == remaining;
        self.nodes[k].dw_out = sol.dw[0];
        if k == 0 {
            self.nodes[0].dw_in = sol.dw[0];
        }
        let n = sol.t.len() - 1;
        for j in 1..=n {
            let t = if j == n && snap_to_target {
                target
            } else {
                node.t + sol.t[j]
            };
            let w = sol.w[j];
            if !(w <= self.opts.w_ceiling) {
                return Err(TransportError::BlowUp {
                    t,
                    w,
                    ceiling: self.opts.w_ceiling,
                });
            }
            self.nodes.push(Node {
                t,
                w,
                phi: node.phi + sol.phi[j],
                dw_in: sol.dw[j],
                dw_out: sol.dw[j],
            });
        }
        if landed {
            if from_jump {
                self.kink_phi.push(critical.unwrap());
            }
            self.exit_times.push(self.t_end());
        }
        Ok(())
    }

    fn solve_window_from(
        &self,
        k: usize,
        input: f64,
        piece: LabelPiece,
        len: f64,
    ) -> Result<WindowSolution, TransportError> {
        let node = self.nodes[k];
        let steps = ((len / self.opts.h) - 1e-9).ceil().max(1.0) as usize;
        let mut start = HistoryStart {
            traj: self,
            phi_k: node.phi,
            cum_k: self.cumulative_input(node.t),
            piece,
            hint: k,
        };
        solve_window(
            &self.speed,
            &mut start,
            WindowSpec {
                w0: node.w,
                input,
                len,
                steps,
                tol: self.opts.picard_tol,
                max_iter: self.opts.picard_max_iter,
            },
        )
        .map_err(|d| TransportError::PicardDivergence {
            t_start: node.t,
            iterations: d.iterations,
            residual: d.residual,
        })
    }

    // ---- label-space primitives -------------------------------------------------

    /// Times in the record where u, ρ(·, 1) or the slope of ρ(·, 1) jumps, ascending.
    pub fn discontinuity_times(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .segments
            .iter()
            .map(|s| s.start)
            .chain(self.exit_times.iter().copied())
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// ∫₀ᵗ u(s) ds.
    pub fn cumulative_input(&self, t: f64) -> f64 {
        if self.segments.is_empty() || t <= 0.0 {
            return 0.0;
        }
        let j = self.segments.partition_point(|s| s.start <= t).max(1) - 1;
        self.seg_cum[j] + self.segments[j].input * (t - self.segments[j].start)
    }

    /// Influx in force at t (segments are closed on the left).
    pub fn input_at(&self, t: f64) -> Option<f64> {
        let j = self.segments.partition_point(|s| s.start <= t);
        if j == 0 {
            self.segments.first().map(|s| s.input)
        } else {
            Some(self.segments[j - 1].input)
        }
    }

    fn node_interval(&self, t: f64, hint: &mut usize) -> usize {
        let last = self.nodes.len() - 2;
        let mut m = (*hint).min(last);
        if self.nodes[m].t <= t && t <= self.nodes[m + 1].t {
            return m;
        }
        if m < last && self.nodes[m + 1].t <= t && t <= self.nodes[m + 2].t {
            m += 1;
            *hint = m;
            return m;
        }
        m = self.nodes.partition_point(|n| n.t <= t).clamp(1, last + 1) - 1;
        *hint = m;
        m
    }

    fn phi_interval(&self, zeta: f64, hint: &mut usize) -> usize {
        let last = self.nodes.len() - 2;
        let mut m = (*hint).min(last);
        if self.nodes[m].phi <= zeta && zeta <= self.nodes[m + 1].phi {
            return m;
        }
        if m > 0 && self.nodes[m - 1].phi <= zeta && zeta <= self.nodes[m].phi {
            m -= 1;
            *hint = m;
            return m;
        }
        if m < last && self.nodes[m + 1].phi <= zeta && zeta <= self.nodes[m + 2].phi {
            m += 1;
            *hint = m;
            return m;
        }
        m = self.nodes.partition_point(|n| n.phi <= zeta).clamp(1, last + 1) - 1;
        *hint = m;
        m
    }

    fn w_interp(&self, t: f64, hint: &mut usize) -> f64 {
        if self.nodes.len() == 1 {
            return self.nodes[0].w;
        }
        let m = self.node_interval(t, hint);
        let (a, b) = (self.nodes[m], self.nodes[m + 1]);
        let h = b.t - a.t;
        hermite(h, a.w, b.w, a.dw_out, b.dw_in, ((t - a.t) / h).clamp(0.0, 1.0))
    }

    fn phi_interp(&self, t: f64, hint: &mut usize) -> f64 {
        if self.nodes.len() == 1 {
            return self.nodes[0].phi;
        }
        let m = self.node_interval(t, hint);
        let (a, b) = (self.nodes[m], self.nodes[m + 1]);
        let h = b.t - a.t;
        hermite(
            h,
            a.phi,
            b.phi,
            self.speed.value(a.w),
            self.speed.value(b.w),
            ((t - a.t) / h).clamp(0.0, 1.0),
        )
    }

    /// Time τ with Φ(τ) = ζ, for 0 ≤ ζ ≤ Φ(t_end).
    fn invert_phi(&self, zeta: f64, hint: &mut usize) -> f64 {
        if self.nodes.len() == 1 || zeta <= 0.0 {
            return 0.0;
        }
        let m = self.phi_interval(zeta, hint);
        let (a, b) = (self.nodes[m], self.nodes[m + 1]);
        let h = b.t - a.t;
        let s = invert_hermite(
            h,
            a.phi,
            b.phi,
            self.speed.value(a.w),
            self.speed.value(b.w),
            zeta,
        );
        a.t + s * h
    }

    /// C(ζ) = ∫₀^ζ R.
    fn label_cumulative(&self, zeta: f64, hint: &mut usize) -> f64 {
        if zeta < 0.0 {
            -self.profile0.mass(-zeta)
        } else {
            let tau = self.invert_phi(zeta, hint);
            self.cumulative_input(tau)
        }
    }

    fn segment_of_label(&self, zeta: f64) -> usize {
        self.seg_phi.partition_point(|&p| p <= zeta).max(1) - 1
    }

    fn piece_at(&self, zeta: f64) -> LabelPiece {
        if zeta < 0.0 {
            LabelPiece::Initial(self.profile0.piece_index(-zeta))
        } else {
            LabelPiece::Boundary(self.segment_of_label(zeta))
        }
    }

    /// Piece just above ζ.
    fn piece_right(&self, zeta: f64) -> LabelPiece {
        if zeta < -LABEL_EPS {
            let x = -zeta;
            let i = self
                .profile0
                .breakpoints()
                .partition_point(|&b| b < x - LABEL_EPS)
                .max(1)
                - 1;
            LabelPiece::Initial(i)
        } else {
            LabelPiece::Boundary(self.seg_phi.partition_point(|&p| p <= zeta + LABEL_EPS).max(1) - 1)
        }
    }

    /// Piece just below ζ.
    fn piece_left(&self, zeta: f64) -> LabelPiece {
        if zeta <= LABEL_EPS {
            let x = -zeta;
            let i = self
                .profile0
                .breakpoints()
                .partition_point(|&b| b <= x + LABEL_EPS)
                .max(1)
                - 1;
            LabelPiece::Initial(i)
        } else {
            LabelPiece::Boundary(self.seg_phi.partition_point(|&p| p < zeta - LABEL_EPS).max(1) - 1)
        }
    }

    fn label_density_on(&self, piece: LabelPiece, zeta: f64, hint: &mut usize) -> f64 {
        match piece {
            LabelPiece::Initial(i) => self.profile0.eval_piece(i, -zeta),
            LabelPiece::Boundary(j) => {
                let tau = self.invert_phi(zeta.max(0.0), hint);
                self.segments[j].input / self.speed.value(self.w_interp(tau, hint))
            }
        }
    }

    fn label_density(&self, zeta: f64, hint: &mut usize) -> f64 {
        self.label_density_on(self.piece_at(zeta), zeta, hint)
    }

    /// Label breakpoints, ascending: interior −ξᵢ, then Φ at segment starts.
    fn label_breakpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.neg_xi.iter().chain(self.seg_phi.iter()).copied()
    }

    fn next_breakpoint_after(&self, zeta: f64) -> Option<f64> {
        self.label_breakpoints().find(|&b| b > zeta + LABEL_EPS)
    }

    /// sup of R over [lo, hi] from `n` uniform labels plus both sides of every breakpoint.
    fn label_sup(&self, lo: f64, hi: f64, n: usize) -> f64 {
        let mut hint = self.nodes.len().saturating_sub(2);
        let mut best = 0.0_f64;
        for k in 0..n {
            let z = hi - (hi - lo) * k as f64 / (n - 1) as f64;
            best = best.max(self.label_density(z, &mut hint));
        }
        let bps: Vec<f64> = self
            .label_breakpoints()
            .filter(|&b| b >= lo && b <= hi)
            .collect();
        for b in bps {
            best = best.max(self.label_density_on(self.piece_left(b), b, &mut hint));
            best = best.max(self.label_density_on(self.piece_right(b), b, &mut hint));
        }
        best
    }

    // ---- public queries ----------------------------------------------------------

    fn check_time(&self, t: f64) -> Result<(), TransportError> {
        if t >= 0.0 && t <= self.t_end() {
            Ok(())
        } else {
            Err(TransportError::OutOfHorizon { t, end: self.t_end() })
        }
    }

    fn check_stage(x: f64) -> Result<(), TransportError> {
        if (0.0..=1.0).contains(&x) {
            Ok(())
        } else {
            Err(TransportError::InvalidStage(x))
        }
    }

    /// Work in progress W(t).
    pub fn w_at(&self, t: f64) -> Result<f64, TransportError> {
        self.check_time(t)?;
        Ok(self.w_interp(t, &mut 0))
    }

    /// Travelled distance Φ(t) = ∫₀ᵗ λ(W).
    pub fn phi_at(&self, t: f64) -> Result<f64, TransportError> {
        self.check_time(t)?;
        Ok(self.phi_interp(t, &mut 0))
    }

    /// W recomputed from the label mass: C(Φ(t)) − C(Φ(t) − 1).
    pub fn w_from_labels(&self, t: f64) -> Result<f64, TransportError> {
        self.check_time(t)?;
        let mut hint = 0;
        let phi = self.phi_interp(t, &mut hint);
        Ok(self.label_cumulative(phi, &mut hint) - self.label_cumulative(phi - 1.0, &mut hint))
    }

    pub fn backtrack(&self, t: f64, x: f64) -> Result<BacktrackResult, TransportError> {
        self.check_time(t)?;
        Self::check_stage(x)?;
        if x == 0.0 {
            return Ok(BacktrackResult {
                t_tilde: t,
                from_boundary: true,
                initial_position: None,
            });
        }
        let mut hint = 0;
        let phi = self.phi_interp(t, &mut hint);
        let zeta = phi - x;
        if zeta >= 0.0 {
            Ok(BacktrackResult {
                t_tilde: self.invert_phi(zeta, &mut hint).min(t),
                from_boundary: true,
                initial_position: None,
            })
        } else {
            Ok(BacktrackResult {
                t_tilde: 0.0,
                from_boundary: false,
                initial_position: Some(-zeta),
            })
        }
    }

    /// ρ(t, x).
    pub fn density_at(&self, t: f64, x: f64) -> Result<f64, TransportError> {
        self.check_time(t)?;
        Self::check_stage(x)?;
        let mut hint = 0;
        if x == 0.0 {
            let u = self.input_at(t).ok_or(TransportError::NoSegment)?;
            return Ok(u / self.speed.value(self.w_interp(t, &mut hint)));
        }
        let phi = self.phi_interp(t, &mut hint);
        Ok(self.label_density(phi - x, &mut hint))
    }

    /// y(t) = λ(W(t))·ρ(t, 1).
    pub fn outflux(&self, t: f64) -> Result<f64, TransportError> {
        let rho = self.density_at(t, 1.0)?;
        Ok(self.speed.value(self.w_at(t)?) * rho)
    }

    /// The profile ρ[t] as a [`DensityView`].
    pub fn slice(&self, t: f64) -> Result<ProfileSlice<'_>, TransportError> {
        self.check_time(t)?;
        let mut hint = 0;
        let phi = self.phi_interp(t, &mut hint);
        let w = self.w_interp(t, &mut hint);
        let boundary = self
            .input_at(t)
            .map(|u| u / self.speed.value(w))
            .ok_or(TransportError::NoSegment)?;
        Ok(ProfileSlice {
            traj: self,
            phi,
            boundary,
        })
    }

    /// Positions at time t where ρ[t] can jump (images of label breakpoints).
    pub fn jump_positions(&self, t: f64) -> Result<Vec<f64>, TransportError> {
        Ok(self.slice(t)?.jumps().into_iter().map(|j| j.x).collect())
    }
}

/// ρ[t] for one fixed t.
#[derive(Debug, Clone, Copy)]
pub struct ProfileSlice<'a> {
    traj: &'a Trajectory,
    phi: f64,
    boundary: f64,
}

impl ProfileSlice<'_> {
    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// ρ(t, 0) = u(t)/λ(W(t)).
    pub fn boundary_value(&self) -> f64 {
        self.boundary
    }
}

impl DensityView for ProfileSlice<'_> {
    fn density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return self.boundary;
        }
        let mut hint = usize::MAX;
        self.traj.label_density(self.phi - x, &mut hint)
    }

    fn jumps(&self) -> Vec<Jump> {
        let traj = self.traj;
        let mut hint = usize::MAX;
        let lo = self.phi - 1.0;
        let mut out = Vec::new();
        // x = 0: boundary value on the left, limit from inside on the right.
        out.push(Jump {
            x: 0.0,
            left: self.boundary,
            right: traj.label_density_on(traj.piece_left(self.phi), self.phi, &mut hint),
        });
        for b in traj.label_breakpoints() {
            if b > lo && b < self.phi {
                let x = self.phi - b;
                out.push(Jump {
                    x,
                    left: traj.label_density_on(traj.piece_right(b), b, &mut hint),
                    right: traj.label_density_on(traj.piece_left(b), b, &mut hint),
                });
            }
        }
        let end = traj.label_density_on(traj.piece_right(lo), lo, &mut hint);
        out.push(Jump {
            x: 1.0,
            left: end,
            right: end,
        });
        out.sort_by(|a, b| a.x.total_cmp(&b.x));
        out
    }

    fn sample_uniform(&self, n: usize) -> Vec<f64> {
        let n = n.max(2);
        let mut hint = usize::MAX;
        (0..n)
            .map(|k| {
                let x = k as f64 / (n - 1) as f64;
                if k == 0 {
                    self.boundary
                } else {
                    self.traj.label_density(self.phi - x, &mut hint)
                }
            })
            .collect()
    }
}

/// Start-of-window density read from the stored history.
struct HistoryStart<'a> {
    traj: &'a Trajectory,
    phi_k: f64,
    cum_k: f64,
    piece: LabelPiece,
    hint: usize,
}

impl StartState for HistoryStart<'_> {
    fn mass(&mut self, a: f64) -> f64 {
        self.cum_k - self.traj.label_cumulative(self.phi_k - a, &mut self.hint)
    }

    fn outflow_density(&mut self, a: f64) -> f64 {
        self.traj
            .label_density_on(self.piece, self.phi_k - a, &mut self.hint)
    }
}

/// Start-of-window density given directly as a profile.
struct ProfileStart<'a> {
    profile: &'a DensityProfile,
}

impl StartState for ProfileStart<'_> {
    fn mass(&mut self, a: f64) -> f64 {
        self.profile.mass(a)
    }

    fn outflow_density(&mut self, a: f64) -> f64 {
        self.profile.eval(a)
    }
}

/// Offset in the window where Φ reaches `target` (relative to the window start).
fn crossing_offset(speed: &SpeedFunction, sol: &WindowSolution, target: f64) -> f64 {
    let m = sol.phi.partition_point(|&p| p <= target).clamp(1, sol.phi.len() - 1) - 1;
    let h = sol.t[m + 1] - sol.t[m];
    let s = invert_hermite(
        h,
        sol.phi[m],
        sol.phi[m + 1],
        speed.value(sol.w[m]),
        speed.value(sol.w[m + 1]),
        target,
    );
    (sol.t[m] + s * h).max(f64::MIN_POSITIVE)
}

/// W on one window from a given start profile.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSamples {
    pub times: Vec<f64>,
    pub w: Vec<f64>,
    pub phi: Vec<f64>,
    pub dw: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Solves `W(t) = t·u + ∫₀^{a(t)} ρ_start`, `a(t) = 1 − ∫₀ᵗ λ(W)`, on `[0, window]`
/// by Picard iteration.
pub fn picard_window(
    w_start: f64,
    input: f64,
    window: f64,
    profile: &DensityProfile,
    speed: &SpeedFunction,
    opts: &SolverOptions,
) -> Result<WindowSamples, TransportError> {
    opts.validate()?;
    if !(input.is_finite() && input > 0.0) {
        return Err(TransportError::InvalidInput(input));
    }
    if !(window.is_finite() && window > 0.0) {
        return Err(TransportError::InvalidOption(format!("window={window}")));
    }
    let steps = ((window / opts.h) - 1e-9).ceil().max(1.0) as usize;
    let sol = solve_window(
        speed,
        &mut ProfileStart { profile },
        WindowSpec {
            w0: w_start,
            input,
            len: window,
            steps,
            tol: opts.picard_tol,
            max_iter: opts.picard_max_iter,
        },
    )
    .map_err(|d| TransportError::PicardDivergence {
        t_start: 0.0,
        iterations: d.iterations,
        residual: d.residual,
    })?;
    Ok(WindowSamples {
        times: sol.t,
        w: sol.w,
        phi: sol.phi,
        dw: sol.dw,
        iterations: sol.iterations,
        residual: sol.residual,
    })
}
