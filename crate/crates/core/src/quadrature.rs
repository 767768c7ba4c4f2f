//! Gauss–Legendre rules and composite integration over breakpoint-respecting panels.

use std::f64::consts::PI;

/// An n-point Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the rule by Newton iteration on the Legendre polynomial P_n.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, then Newton.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d.is_finite() { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            weights[i] = w;
            nodes[n - 1 - i] = x;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integrates `f` over [a, b]. Nodes are interior, so endpoint jumps never get sampled.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }

    /// Composite rule: [a, b] split into `panels` equal panels.
    pub fn integrate_composite<F: FnMut(f64) -> f64>(
        &self,
        a: f64,
        b: f64,
        panels: usize,
        mut f: F,
    ) -> f64 {
        let panels = panels.max(1);
        let width = (b - a) / panels as f64;
        (0..panels)
            .map(|p| {
                let lo = a + width * p as f64;
                let hi = if p + 1 == panels { b } else { lo + width };
                self.integrate(lo, hi, &mut f)
            })
            .sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Order and panel count for composite quadrature over [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuadratureRule {
    pub order: usize,
    /// Panels per unit length; each breakpoint subinterval gets at least one.
    pub panels: usize,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self {
            order: 16,
            panels: 64,
        }
    }
}

impl QuadratureRule {
    /// Panel edges over [lo, hi], refined so that every point of `cuts` inside the
    /// interval becomes an edge.
    pub fn panel_edges(&self, lo: f64, hi: f64, cuts: &[f64]) -> Vec<f64> {
        let mut stops: Vec<f64> = cuts
            .iter()
            .copied()
            .filter(|&c| c > lo && c < hi)
            .collect();
        stops.sort_by(f64::total_cmp);
        stops.dedup();
        let mut edges = vec![lo];
        let mut left = lo;
        for right in stops.into_iter().chain(std::iter::once(hi)) {
            let len = right - left;
            if len <= 0.0 {
                continue;
            }
            let count = ((len * self.panels as f64).ceil() as usize).max(1);
            for k in 1..count {
                edges.push(left + len * k as f64 / count as f64);
            }
            edges.push(right);
            left = right;
        }
        edges
    }
}
