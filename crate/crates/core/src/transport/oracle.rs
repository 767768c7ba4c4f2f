//! Independent cross-check: classical RK4 on the mass balance
//! `W' = u(t) − λ(W)·ρ(t, 1)`, `Φ' = λ(W)`, with ρ(t, 1) read off the oracle's own
//! history. Steps end exactly on influx switches, wherever a jump of the density
//! reaches x = 1, and one transit later where the resulting kink of W comes back
//! as a jump of W''.

use crate::plant::{DensityProfile, SpeedFunction};

use super::hermite::{hermite, invert_hermite};
use super::{Segment, TransportError};

const LABEL_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub times: Vec<f64>,
    pub w: Vec<f64>,
    pub phi: Vec<f64>,
    dw_in: Vec<f64>,
    dw_out: Vec<f64>,
    lambda: Vec<f64>,
}

impl OracleSolution {
    /// Dense W by cubic Hermite on the oracle grid.
    pub fn w_at(&self, t: f64) -> f64 {
        let mut hint = 0;
        self.w_hint(t, &mut hint)
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    fn interval(&self, t: f64, hint: &mut usize) -> usize {
        let last = self.times.len().saturating_sub(2);
        let m = (*hint).min(last);
        if self.times[m] <= t && t <= self.times[m + 1] {
            return m;
        }
        if m < last && self.times[m + 1] <= t && t <= self.times[m + 2] {
            *hint = m + 1;
            return m + 1;
        }
        let m = self.times.partition_point(|&x| x <= t).clamp(1, last + 1) - 1;
        *hint = m;
        m
    }

    fn w_hint(&self, t: f64, hint: &mut usize) -> f64 {
        if self.times.len() == 1 {
            return self.w[0];
        }
        let m = self.interval(t, hint);
        let h = self.times[m + 1] - self.times[m];
        hermite(
            h,
            self.w[m],
            self.w[m + 1],
            self.dw_out[m],
            self.dw_in[m + 1],
            ((t - self.times[m]) / h).clamp(0.0, 1.0),
        )
    }

    fn invert_phi(&self, zeta: f64, hint: &mut usize) -> f64 {
        if zeta <= 0.0 || self.times.len() == 1 {
            return 0.0;
        }
        let last = self.phi.len() - 2;
        let mut m = (*hint).min(last);
        if !(self.phi[m] <= zeta && zeta <= self.phi[m + 1]) {
            if m < last && self.phi[m + 1] <= zeta && zeta <= self.phi[m + 2] {
                m += 1;
            } else {
                m = self.phi.partition_point(|&p| p <= zeta).clamp(1, last + 1) - 1;
            }
            *hint = m;
        }
        let h = self.times[m + 1] - self.times[m];
        let s = invert_hermite(
            h,
            self.phi[m],
            self.phi[m + 1],
            self.lambda[m],
            self.lambda[m + 1],
            zeta,
        );
        self.times[m] + s * h
    }
}

/// Composite Simpson over each smooth piece of the profile.
fn simpson_mass(profile: &DensityProfile, intervals_per_piece: usize) -> f64 {
    let n = intervals_per_piece.max(2) & !1;
    let mut total = 0.0;
    for (i, &a) in profile.breakpoints().iter().enumerate() {
        let b = profile.piece_end(i);
        let h = (b - a) / n as f64;
        let mut acc = profile.eval_piece(i, a) + profile.eval_piece(i, b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * profile.eval_piece(i, a + h * k as f64);
        }
        total += acc * h / 3.0;
    }
    total
}

#[derive(Clone, Copy)]
enum Source {
    Initial(usize),
    Boundary(usize),
}

struct Oracle<'a> {
    profile: &'a DensityProfile,
    speed: &'a SpeedFunction,
    segments: &'a [Segment],
    seg_phi: Vec<f64>,
    /// Φ where W' jumped; R' jumps there.
    kink_phi: Vec<f64>,
    sol: OracleSolution,
    hint: usize,
}

impl Oracle<'_> {
    /// Piece of ρ(·, 1) just after the current time, given Φ − 1 = ζ.
    fn source(&self, zeta: f64) -> Source {
        if zeta < -LABEL_EPS {
            let x = -zeta;
            let bps = self.profile.breakpoints();
            let i = bps.partition_point(|&b| b < x - LABEL_EPS).max(1) - 1;
            Source::Initial(i)
        } else {
            Source::Boundary(self.seg_phi.partition_point(|&p| p <= zeta + LABEL_EPS).max(1) - 1)
        }
    }

    fn outflow_density(&mut self, src: Source, zeta: f64) -> f64 {
        match src {
            Source::Initial(i) => self.profile.eval_piece(i, -zeta),
            Source::Boundary(j) => {
                let mut hint = self.hint;
                let tau = self.sol.invert_phi(zeta.max(0.0), &mut hint);
                let w = self.sol.w_hint(tau, &mut hint);
                self.hint = hint;
                self.segments[j].input / self.speed.value(w)
            }
        }
    }

    fn rhs(&mut self, u: f64, src: Source, w: f64, phi: f64) -> (f64, f64) {
        let lam = self.speed.value(w);
        let rho1 = self.outflow_density(src, phi - 1.0);
        (u - lam * rho1, lam)
    }

    fn step(&mut self, u: f64, src: Source, w: f64, phi: f64, h: f64) -> (f64, f64) {
        let (k1w, k1p) = self.rhs(u, src, w, phi);
        let (k2w, k2p) = self.rhs(u, src, w + 0.5 * h * k1w, phi + 0.5 * h * k1p);
        let (k3w, k3p) = self.rhs(u, src, w + 0.5 * h * k2w, phi + 0.5 * h * k2p);
        let (k4w, k4p) = self.rhs(u, src, w + h * k3w, phi + h * k3p);
        (
            w + h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w),
            phi + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p),
        )
    }

    /// Next label above ζ where ρ(·, 1) or its slope can jump, and whether it is a
    /// jump of ρ itself.
    fn next_critical(&self, zeta: f64) -> Option<(f64, bool)> {
        let bps = self.profile.breakpoints();
        let jump = bps[1..]
            .iter()
            .rev()
            .map(|&x| -x)
            .find(|&b| b > zeta + LABEL_EPS)
            .or_else(|| self.seg_phi.iter().copied().find(|&b| b > zeta + LABEL_EPS));
        let kink = self.kink_phi.iter().copied().find(|&b| b > zeta + LABEL_EPS);
        match (jump, kink) {
            (Some(a), Some(b)) if b < a - LABEL_EPS => Some((b, false)),
            (Some(a), _) => Some((a, true)),
            (None, Some(b)) => Some((b, false)),
            (None, None) => None,
        }
    }
}

/// RK4 solution of the mass balance for the given influx sequence.
pub fn rk_oracle(
    profile0: &DensityProfile,
    speed: &SpeedFunction,
    segments: &[Segment],
    t_end: f64,
    h: f64,
) -> Result<OracleSolution, TransportError> {
    if !(h.is_finite() && h > 0.0) {
        return Err(TransportError::InvalidOption(format!("h={h}")));
    }
    if segments.is_empty() || segments[0].start != 0.0 {
        return Err(TransportError::NoSegment);
    }
    let w0 = simpson_mass(profile0, 1 << 14);
    let mut o = Oracle {
        profile: profile0,
        speed,
        segments,
        seg_phi: vec![0.0],
        kink_phi: Vec::new(),
        sol: OracleSolution {
            times: vec![0.0],
            w: vec![w0],
            phi: vec![0.0],
            dw_in: vec![f64::NAN],
            dw_out: vec![f64::NAN],
            lambda: vec![speed.value(w0)],
        },
        hint: 0,
    };
    let mut seg = 0;
    let (mut t, mut w, mut phi) = (0.0_f64, w0, 0.0_f64);
    while t < t_end {
        while seg + 1 < segments.len() && segments[seg + 1].start <= t {
            seg += 1;
            o.seg_phi.push(phi);
        }
        let u = segments[seg].input;
        let src = o.source(phi - 1.0);
        let (d0, _) = o.rhs(u, src, w, phi);
        let n = o.sol.times.len() - 1;
        o.sol.dw_out[n] = d0;
        if n == 0 {
            o.sol.dw_in[0] = d0;
        }

        let stop = segments.get(seg + 1).map_or(t_end, |s| s.start.min(t_end));
        let mut dt = h.min(stop - t);
        let mut next = o.step(u, src, w, phi, dt);
        if let Some((b, is_jump)) = o.next_critical(phi - 1.0) {
            let c = 1.0 + b;
            if next.1 > c + 1e-13 {
                if is_jump {
                    o.kink_phi.push(c);
                }
                dt *= (c - phi) / (next.1 - phi);
                for _ in 0..30 {
                    next = o.step(u, src, w, phi, dt);
                    let err = next.1 - c;
                    if err.abs() <= 1e-13 {
                        break;
                    }
                    dt -= err / speed.value(next.0);
                }
            }
        }
        let t_next = if stop - t <= dt { stop } else { t + dt };
        let (w_next, phi_next) = next;
        if !(w_next.is_finite() && phi_next.is_finite()) {
            return Err(TransportError::BlowUp {
                t: t_next,
                w: w_next,
                ceiling: f64::INFINITY,
            });
        }
        // Left derivative at the new node, with the piece used on this step.
        let lam = speed.value(w_next);
        let rho1 = o.outflow_density(src, phi_next - 1.0);
        o.sol.times.push(t_next);
        o.sol.w.push(w_next);
        o.sol.phi.push(phi_next);
        o.sol.dw_in.push(u - lam * rho1);
        o.sol.dw_out.push(u - lam * rho1);
        o.sol.lambda.push(lam);
        t = t_next;
        w = w_next;
        phi = phi_next;
    }
    Ok(o.sol)
}
