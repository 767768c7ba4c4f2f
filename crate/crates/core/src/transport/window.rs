//! Fixed-point kernel for one constant-input window.
//!
//! Unknown: W on a uniform grid of the window. One sweep of the map computes
//! Φ by the end-corrected trapezoid rule, the remaining stage `a(t) = 1 − ΔΦ(t)`,
//! and the new `W(t) = t·u + ∫₀^{a(t)} ρ_start`. When `a(t) < 0` the start
//! profile has fully left the line and `W(t) = u·(t − t̃(t,1))`.

use crate::plant::SpeedFunction;

use super::hermite::{hermite, invert_hermite};

/// The density at the start of the window, as seen by the kernel.
pub(crate) trait StartState {
    /// ∫₀ᵃ ρ_start(x) dx, a ∈ [0, 1].
    fn mass(&mut self, a: f64) -> f64;
    /// ρ_start(a) on the piece that reaches x = 1 during the window.
    fn outflow_density(&mut self, a: f64) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct WindowSpec {
    pub w0: f64,
    pub input: f64,
    pub len: f64,
    pub steps: usize,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct WindowSolution {
    /// Offsets from the window start.
    pub t: Vec<f64>,
    pub w: Vec<f64>,
    /// Φ(t) − Φ(window start).
    pub phi: Vec<f64>,
    pub dw: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl WindowSolution {
    pub fn phi_end(&self) -> f64 {
        *self.phi.last().unwrap()
    }

    pub fn w_end(&self) -> f64 {
        *self.w.last().unwrap()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Diverged {
    pub iterations: usize,
    pub residual: f64,
}

pub(crate) fn solve_window<S: StartState>(
    speed: &SpeedFunction,
    start: &mut S,
    spec: WindowSpec,
) -> Result<WindowSolution, Diverged> {
    let n = spec.steps.max(1);
    let u = spec.input;
    let t: Vec<f64> = (0..=n).map(|j| spec.len * j as f64 / n as f64).collect();
    let rho_out0 = start.outflow_density(1.0);
    let mut w = vec![spec.w0; n + 1];
    let mut dw = vec![u - speed.value(spec.w0) * rho_out0; n + 1];
    let mut phi = vec![0.0; n + 1];
    let mut next = vec![spec.w0; n + 1];

    let mut residual = f64::INFINITY;
    for iter in 1..=spec.max_iter {
        accumulate_phi(speed, &t, &w, &dw, &mut phi);
        residual = 0.0;
        for j in 1..=n {
            let a = 1.0 - phi[j];
            next[j] = if a >= 0.0 {
                t[j] * u + start.mass(a)
            } else {
                let tau = own_backtrack(speed, &t, &w, &phi, phi[j] - 1.0);
                u * (t[j] - tau)
            };
            residual = residual.max((next[j] - w[j]).abs());
        }
        std::mem::swap(&mut w, &mut next);
        refresh_derivative(speed, start, &t, &w, &phi, &mut dw, u);
        if residual <= spec.tol {
            accumulate_phi(speed, &t, &w, &dw, &mut phi);
            refresh_derivative(speed, start, &t, &w, &phi, &mut dw, u);
            return Ok(WindowSolution {
                t,
                w,
                phi,
                dw,
                iterations: iter,
                residual,
            });
        }
        if !residual.is_finite() {
            break;
        }
    }
    Err(Diverged {
        iterations: spec.max_iter,
        residual,
    })
}

/// Φ by trapezoid with the end correction h²/12·(f'ₗ − f'ᵣ), f = λ(W), f' = λ'(W)·W'.
fn accumulate_phi(speed: &SpeedFunction, t: &[f64], w: &[f64], dw: &[f64], phi: &mut [f64]) {
    phi[0] = 0.0;
    let mut f_prev = speed.value(w[0]);
    let mut g_prev = speed.derivative(w[0]) * dw[0];
    for j in 1..t.len() {
        let h = t[j] - t[j - 1];
        let f = speed.value(w[j]);
        let g = speed.derivative(w[j]) * dw[j];
        phi[j] = phi[j - 1] + 0.5 * h * (f_prev + f) + h * h / 12.0 * (g_prev - g);
        f_prev = f;
        g_prev = g;
    }
}

fn refresh_derivative<S: StartState>(
    speed: &SpeedFunction,
    start: &mut S,
    t: &[f64],
    w: &[f64],
    phi: &[f64],
    dw: &mut [f64],
    u: f64,
) {
    for j in 0..t.len() {
        let a = 1.0 - phi[j];
        let rho_out = if a >= 0.0 {
            start.outflow_density(a)
        } else {
            let tau = own_backtrack(speed, t, w, phi, phi[j] - 1.0);
            u / speed.value(own_w(speed, t, w, dw, tau))
        };
        dw[j] = u - speed.value(w[j]) * rho_out;
    }
}

/// Solves Φ(τ) = target inside the window using the current iterate.
fn own_backtrack(speed: &SpeedFunction, t: &[f64], w: &[f64], phi: &[f64], target: f64) -> f64 {
    if target <= 0.0 {
        return 0.0;
    }
    let m = phi.partition_point(|&p| p <= target).clamp(1, phi.len() - 1) - 1;
    let h = t[m + 1] - t[m];
    let s = invert_hermite(
        h,
        phi[m],
        phi[m + 1],
        speed.value(w[m]),
        speed.value(w[m + 1]),
        target,
    );
    t[m] + s * h
}

fn own_w(_speed: &SpeedFunction, t: &[f64], w: &[f64], dw: &[f64], tau: f64) -> f64 {
    let m = t.partition_point(|&x| x <= tau).clamp(1, t.len() - 1) - 1;
    let h = t[m + 1] - t[m];
    hermite(h, w[m], w[m + 1], dw[m], dw[m + 1], (tau - t[m]) / h)
}
