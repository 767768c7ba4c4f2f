//! Plant objects: the production-speed law, density profiles on the stage interval
//! [0, 1], and the uniform equilibrium.
//!
//! Profiles are closed-form evaluators split into smooth pieces at explicit
//! breakpoints `0 = ξ₀ < ξ₁ < … < ξ_N < 1`. Piece `i` covers `(ξᵢ, ξᵢ₊₁]`, so point
//! evaluation is left-continuous. Each piece can also be evaluated slightly outside
//! its own interval, which lets the solver take one-sided limits at jumps.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::quadrature::{GaussLegendre, QuadratureRule};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("invalid speed function: {0}")]
    InvalidSpeed(String),
    #[error("invalid breakpoints: {0}")]
    InvalidBreakpoints(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("profile value {value} at x={x} violates bound {bound}")]
    BoundViolation { x: f64, value: f64, bound: f64 },
    #[error("equilibrium density must be positive and finite, got {0}")]
    InvalidEquilibrium(f64),
}

/// The production-speed law λ(W) with its declared Lipschitz constant K.
#[derive(Clone)]
pub struct SpeedFunction {
    name: String,
    value: ScalarFn,
    derivative: ScalarFn,
    lipschitz_k: f64,
    lambda0: f64,
}

impl fmt::Debug for SpeedFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpeedFunction")
            .field("name", &self.name)
            .field("lipschitz_k", &self.lipschitz_k)
            .field("lambda0", &self.lambda0)
            .finish()
    }
}

impl SpeedFunction {
    pub fn new(
        name: impl Into<String>,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
        lipschitz_k: f64,
    ) -> Result<Self, PlantError> {
        if !(lipschitz_k.is_finite() && lipschitz_k > 0.0) {
            return Err(PlantError::InvalidSpeed(format!(
                "Lipschitz constant must be positive, got {lipschitz_k}"
            )));
        }
        let lambda0 = value(0.0);
        if !(lambda0.is_finite() && lambda0 > 0.0) {
            return Err(PlantError::InvalidSpeed(format!(
                "lambda(0) must be positive, got {lambda0}"
            )));
        }
        Ok(Self {
            name: name.into(),
            value: Arc::new(value),
            derivative: Arc::new(derivative),
            lipschitz_k,
            lambda0,
        })
    }

    /// λ(W) = 1/(1+W), K = 1.
    pub fn hyperbolic() -> Self {
        Self::new(
            "hyperbolic",
            |w| 1.0 / (1.0 + w),
            |w| -1.0 / ((1.0 + w) * (1.0 + w)),
            1.0,
        )
        .expect("hyperbolic speed law is valid")
    }

    /// λ(W) ≡ c. K is declared as 1 since the dwell-time bound needs K > 0.
    pub fn constant(c: f64) -> Result<Self, PlantError> {
        Self::new("constant", move |_| c, |_| 0.0, 1.0)
    }

    /// λ(W) = v·exp(−k·W), K = v·k.
    pub fn exponential(v: f64, k: f64) -> Result<Self, PlantError> {
        if !(k > 0.0) {
            return Err(PlantError::InvalidSpeed(format!("decay rate must be positive, got {k}")));
        }
        Self::new(
            "exponential",
            move |w| v * (-k * w).exp(),
            move |w| -k * v * (-k * w).exp(),
            v * k,
        )
    }

    #[inline]
    pub fn value(&self, w: f64) -> f64 {
        (self.value)(w)
    }

    #[inline]
    pub fn derivative(&self, w: f64) -> f64 {
        (self.derivative)(w)
    }

    pub fn lipschitz_k(&self) -> f64 {
        self.lipschitz_k
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

/// The speed law used in the reference experiments: λ(W) = 1/(1+W).
pub fn builtin_speed_hyperbolic() -> SpeedFunction {
    SpeedFunction::hyperbolic()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeedCheck {
    Finite,
    Positive,
    NonIncreasing,
    DerivativeBound,
    Lambda0,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationEntry {
    pub check: SpeedCheck,
    pub passed: bool,
    /// The first grid point where the check failed.
    pub violation_at: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub entries: Vec<ValidationEntry>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ValidationEntry> {
        self.entries.iter().filter(|e| !e.passed)
    }
}

pub const DEFAULT_VALIDATION_W_HI: f64 = 100.0;

/// Grid-checks the standing hypotheses on λ over [0, 100].
pub fn validate_plant(speed: &SpeedFunction, grid_n: usize) -> ValidationReport {
    validate_plant_on(speed, grid_n, DEFAULT_VALIDATION_W_HI)
}

pub fn validate_plant_on(speed: &SpeedFunction, grid_n: usize, w_hi: f64) -> ValidationReport {
    let n = grid_n.max(2);
    let grid: Vec<f64> = (0..n).map(|k| w_hi * k as f64 / (n - 1) as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&w| speed.value(w)).collect();
    let derivs: Vec<f64> = grid.iter().map(|&w| speed.derivative(w)).collect();

    let mut entries = Vec::with_capacity(5);
    let bad = grid
        .iter()
        .zip(values.iter().zip(&derivs))
        .find(|(_, (v, d))| !v.is_finite() || !d.is_finite())
        .map(|(w, _)| *w);
    entries.push(ValidationEntry {
        check: SpeedCheck::Finite,
        passed: bad.is_none(),
        violation_at: bad,
        detail: match bad {
            Some(w) => format!("invalid speed function: non-finite value at W={w}"),
            None => "all values finite".into(),
        },
    });

    let bad = grid.iter().zip(&values).find(|(_, v)| !(**v > 0.0)).map(|(w, _)| *w);
    entries.push(ValidationEntry {
        check: SpeedCheck::Positive,
        passed: bad.is_none(),
        violation_at: bad,
        detail: match bad {
            Some(w) => format!("lambda({w}) is not positive"),
            None => "lambda > 0 on grid".into(),
        },
    });

    let bad = values
        .windows(2)
        .position(|p| !(p[1] <= p[0] + 1e-14 * p[0].abs()))
        .map(|k| grid[k + 1]);
    entries.push(ValidationEntry {
        check: SpeedCheck::NonIncreasing,
        passed: bad.is_none(),
        violation_at: bad,
        detail: match bad {
            Some(w) => format!("lambda increases before W={w}"),
            None => "lambda non-increasing on grid".into(),
        },
    });

    let k = speed.lipschitz_k();
    let bad = grid
        .iter()
        .zip(&derivs)
        .find(|(_, d)| !(d.abs() <= k * (1.0 + 1e-12)))
        .map(|(w, _)| *w);
    entries.push(ValidationEntry {
        check: SpeedCheck::DerivativeBound,
        passed: bad.is_none(),
        violation_at: bad,
        detail: match bad {
            Some(w) => format!("|lambda'({w})| exceeds K={k}"),
            None => format!("|lambda'| <= K={k} on grid"),
        },
    });

    let v0 = values[0];
    let ok = (speed.lambda0() - v0).abs() <= 1e-15 * v0.abs().max(1.0);
    entries.push(ValidationEntry {
        check: SpeedCheck::Lambda0,
        passed: ok,
        violation_at: if ok { None } else { Some(0.0) },
        detail: format!("lambda0={} value(0)={}", speed.lambda0(), v0),
    });

    ValidationReport { entries }
}

/// Target uniform density ρ_s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumSpec {
    rho_s: f64,
}

impl EquilibriumSpec {
    pub fn new(rho_s: f64) -> Result<Self, PlantError> {
        if rho_s.is_finite() && rho_s > 0.0 {
            Ok(Self { rho_s })
        } else {
            Err(PlantError::InvalidEquilibrium(rho_s))
        }
    }

    pub fn rho_s(&self) -> f64 {
        self.rho_s
    }

    /// Equilibrium influx ρ_s·λ(ρ_s).
    pub fn influx(&self, speed: &SpeedFunction) -> f64 {
        self.rho_s * speed.value(self.rho_s)
    }
}

/// One-sided limits of a density at a possible discontinuity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub x: f64,
    pub left: f64,
    pub right: f64,
}

/// Read access to a density on [0, 1] that sup-scans and quadrature can use.
pub trait DensityView {
    /// Point value, left-continuous.
    fn density(&self, x: f64) -> f64;

    /// Positions where the density may jump, with both one-sided limits.
    fn jumps(&self) -> Vec<Jump>;

    /// Values at `n` uniform points `k/(n-1)`, k = 0..n.
    fn sample_uniform(&self, n: usize) -> Vec<f64> {
        let n = n.max(2);
        (0..n)
            .map(|k| self.density(k as f64 / (n - 1) as f64))
            .collect()
    }
}

/// A positive piecewise-C¹ density on [0, 1].
#[derive(Clone)]
pub struct DensityProfile {
    description: String,
    breakpoints: Vec<f64>,
    pieces: Vec<ScalarFn>,
    inf_bound: f64,
    sup_bound: f64,
    rule: QuadratureRule,
    mass: Arc<MassTable>,
}

impl fmt::Debug for DensityProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensityProfile")
            .field("description", &self.description)
            .field("breakpoints", &self.breakpoints)
            .field("inf_bound", &self.inf_bound)
            .field("sup_bound", &self.sup_bound)
            .finish()
    }
}

/// Cumulative mass at panel edges; panels never straddle a breakpoint.
struct MassTable {
    gl: GaussLegendre,
    edges: Vec<f64>,
    cumulative: Vec<f64>,
    panel_piece: Vec<usize>,
}

const VALIDATION_GRID: usize = 4097;

impl DensityProfile {
    /// Builds a profile from per-piece evaluators. Piece `i` is used on `(ξᵢ, ξᵢ₊₁]`.
    pub fn from_pieces(
        description: impl Into<String>,
        breakpoints: Vec<f64>,
        pieces: Vec<ScalarFn>,
        inf_bound: f64,
        sup_bound: f64,
    ) -> Result<Self, PlantError> {
        if breakpoints.first() != Some(&0.0) {
            return Err(PlantError::InvalidBreakpoints(
                "first breakpoint must be 0".into(),
            ));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(PlantError::InvalidBreakpoints(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        if breakpoints.iter().any(|&b| !(0.0..1.0).contains(&b)) {
            return Err(PlantError::InvalidBreakpoints(
                "breakpoints must lie in [0, 1)".into(),
            ));
        }
        if pieces.len() != breakpoints.len() {
            return Err(PlantError::InvalidProfile(format!(
                "{} pieces for {} breakpoints",
                pieces.len(),
                breakpoints.len()
            )));
        }
        if !(inf_bound.is_finite() && inf_bound > 0.0 && sup_bound.is_finite())
            || sup_bound < inf_bound
        {
            return Err(PlantError::InvalidProfile(format!(
                "bounds must satisfy 0 < inf <= sup, got inf={inf_bound} sup={sup_bound}"
            )));
        }
        let rule = QuadratureRule::default();
        let mass = Arc::new(MassTable::build(&breakpoints, &pieces, rule));
        let profile = Self {
            description: description.into(),
            breakpoints,
            pieces,
            inf_bound,
            sup_bound,
            rule,
            mass,
        };
        profile.check_bounds()?;
        Ok(profile)
    }

    /// A single smooth piece on (0, 1].
    pub fn smooth(
        description: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        inf_bound: f64,
        sup_bound: f64,
    ) -> Result<Self, PlantError> {
        Self::from_pieces(description, vec![0.0], vec![Arc::new(f)], inf_bound, sup_bound)
    }

    pub fn constant(value: f64) -> Result<Self, PlantError> {
        Self::smooth(format!("constant {value}"), move |_| value, value, value)
    }

    /// Linear interpolation of tabulated `(x, ρ)` knots covering [0, 1]. Interior knots
    /// become breakpoints.
    pub fn piecewise_linear(xs: &[f64], values: &[f64]) -> Result<Self, PlantError> {
        if xs.len() < 2 || xs.len() != values.len() {
            return Err(PlantError::InvalidProfile(
                "need at least two knots and one value per knot".into(),
            ));
        }
        if xs[0] != 0.0 || *xs.last().unwrap() != 1.0 {
            return Err(PlantError::InvalidProfile("knots must span [0, 1]".into()));
        }
        let mut pieces: Vec<ScalarFn> = Vec::with_capacity(xs.len() - 1);
        for k in 0..xs.len() - 1 {
            let (x0, x1, y0, y1) = (xs[k], xs[k + 1], values[k], values[k + 1]);
            if !(x1 > x0) {
                return Err(PlantError::InvalidBreakpoints(
                    "knots must be strictly increasing".into(),
                ));
            }
            let slope = (y1 - y0) / (x1 - x0);
            pieces.push(Arc::new(move |x| y0 + slope * (x - x0)));
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(lo > 0.0) {
            return Err(PlantError::InvalidProfile(format!(
                "tabulated density must be positive, min is {lo}"
            )));
        }
        Self::from_pieces(
            "piecewise linear",
            xs[..xs.len() - 1].to_vec(),
            pieces,
            lo,
            hi,
        )
    }

    /// Piecewise-constant density: `values[i]` on `(edges[i], edges[i+1]]`, where the
    /// last edge is implicitly 1.
    pub fn piecewise_constant(edges: &[f64], values: &[f64]) -> Result<Self, PlantError> {
        if edges.len() != values.len() {
            return Err(PlantError::InvalidProfile(
                "one value per breakpoint required".into(),
            ));
        }
        let pieces: Vec<ScalarFn> = values
            .iter()
            .map(|&v| Arc::new(move |_: f64| v) as ScalarFn)
            .collect();
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(lo > 0.0) {
            return Err(PlantError::InvalidProfile(format!(
                "density must be positive, min is {lo}"
            )));
        }
        Self::from_pieces("piecewise constant", edges.to_vec(), pieces, lo, hi)
    }

    /// Replaces the quadrature rule used for mass integrals.
    pub fn with_quadrature(mut self, rule: QuadratureRule) -> Self {
        self.rule = rule;
        self.mass = Arc::new(MassTable::build(&self.breakpoints, &self.pieces, rule));
        self
    }

    fn check_bounds(&self) -> Result<(), PlantError> {
        let slack = 1e-12 * self.sup_bound.abs().max(1.0);
        let check = |x: f64, v: f64| -> Result<(), PlantError> {
            if !v.is_finite() || v <= 0.0 {
                return Err(PlantError::InvalidProfile(format!(
                    "density {v} at x={x} is not positive"
                )));
            }
            if v < self.inf_bound - slack {
                return Err(PlantError::BoundViolation {
                    x,
                    value: v,
                    bound: self.inf_bound,
                });
            }
            if v > self.sup_bound + slack {
                return Err(PlantError::BoundViolation {
                    x,
                    value: v,
                    bound: self.sup_bound,
                });
            }
            Ok(())
        };
        for k in 1..VALIDATION_GRID {
            let x = k as f64 / (VALIDATION_GRID - 1) as f64;
            check(x, self.eval(x))?;
        }
        for j in self.jumps() {
            check(j.x, j.left)?;
            check(j.x, j.right)?;
        }
        Ok(())
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn piece_count(&self) -> usize {
        self.pieces.len()
    }

    pub fn inf_bound(&self) -> f64 {
        self.inf_bound
    }

    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    pub fn quadrature(&self) -> QuadratureRule {
        self.rule
    }

    /// Index of the piece owning `x` under the left-continuous convention.
    pub fn piece_index(&self, x: f64) -> usize {
        self.breakpoints
            .partition_point(|&b| b < x)
            .saturating_sub(1)
    }

    /// ρ₀(x), left-continuous; x ≤ 0 gives the right limit at 0.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.pieces[self.piece_index(x)])(x)
    }

    /// Evaluates piece `i` at `x`, extending it past its own interval if needed.
    #[inline]
    pub fn eval_piece(&self, piece: usize, x: f64) -> f64 {
        (self.pieces[piece])(x)
    }

    /// Right endpoint of piece `i`.
    pub fn piece_end(&self, piece: usize) -> f64 {
        self.breakpoints.get(piece + 1).copied().unwrap_or(1.0)
    }

    /// ∫₀ᵃ ρ₀(x) dx for a ∈ [0, 1] (clamped).
    pub fn mass(&self, a: f64) -> f64 {
        self.mass.mass(a, &self.pieces)
    }

    /// ∫₀¹ ρ₀(x) dx.
    pub fn total_mass(&self) -> f64 {
        *self.mass.cumulative.last().unwrap()
    }
}

impl MassTable {
    fn build(breakpoints: &[f64], pieces: &[ScalarFn], rule: QuadratureRule) -> Self {
        let gl = GaussLegendre::new(rule.order);
        let edges = rule.panel_edges(0.0, 1.0, breakpoints);
        let mut cumulative = Vec::with_capacity(edges.len());
        let mut panel_piece = Vec::with_capacity(edges.len() - 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for w in edges.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let piece = breakpoints.partition_point(|&b| b < mid).saturating_sub(1);
            let f = &pieces[piece];
            acc += gl.integrate(w[0], w[1], |x| f(x));
            cumulative.push(acc);
            panel_piece.push(piece);
        }
        Self {
            gl,
            edges,
            cumulative,
            panel_piece,
        }
    }

    fn mass(&self, a: f64, pieces: &[ScalarFn]) -> f64 {
        if a <= 0.0 {
            return 0.0;
        }
        if a >= 1.0 {
            return *self.cumulative.last().unwrap();
        }
        let k = self.edges.partition_point(|&e| e <= a) - 1;
        let lo = self.edges[k];
        if a == lo {
            return self.cumulative[k];
        }
        let f = &pieces[self.panel_piece[k]];
        self.cumulative[k] + self.gl.integrate(lo, a, |x| f(x))
    }
}

impl DensityView for DensityProfile {
    fn density(&self, x: f64) -> f64 {
        self.eval(x)
    }

    fn jumps(&self) -> Vec<Jump> {
        let mut out = Vec::with_capacity(self.breakpoints.len() + 1);
        for (i, &b) in self.breakpoints.iter().enumerate() {
            let right = self.eval_piece(i, b);
            let left = if i == 0 { right } else { self.eval_piece(i - 1, b) };
            out.push(Jump { x: b, left, right });
        }
        let last = self.eval_piece(self.pieces.len() - 1, 1.0);
        out.push(Jump {
            x: 1.0,
            left: last,
            right: last,
        });
        out
    }
}

/// ρ₀(x) = 6 + sin(πx) + l·x⁴, the reference initial-condition family.
pub fn builtin_profile_paper(l: f64) -> Result<DensityProfile, PlantError> {
    if !(l.is_finite() && l >= 0.0) {
        return Err(PlantError::InvalidProfile(format!(
            "family parameter l must be non-negative, got {l}"
        )));
    }
    DensityProfile::smooth(
        format!("6+sin(pi x)+{l}x^4"),
        move |x| 6.0 + (std::f64::consts::PI * x).sin() + l * x.powi(4),
        6.0,
        7.0 + l,
    )
}

/// (∫₀¹(ρ(x)−ρ_s)² dx)^{1/2}, with panels split at the view's jumps.
pub fn l2_deviation(view: &impl DensityView, rho_s: f64, rule: QuadratureRule) -> f64 {
    let cuts: Vec<f64> = view.jumps().iter().map(|j| j.x).collect();
    let edges = rule.panel_edges(0.0, 1.0, &cuts);
    let gl = GaussLegendre::new(rule.order);
    let sq: f64 = edges
        .windows(2)
        .map(|w| {
            gl.integrate(w[0], w[1], |x| {
                let d = view.density(x) - rho_s;
                d * d
            })
        })
        .sum();
    sq.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn hyperbolic_values() {
        let s = builtin_speed_hyperbolic();
        assert_eq!(s.value(0.0), 1.0);
        assert_eq!(s.value(1.0), 0.5);
        assert!((s.value(6.0 + 2.0 / PI) - 0.130947988744760).abs() < 1e-12);
        assert_eq!(s.lambda0(), 1.0);
        assert_eq!(s.lipschitz_k(), 1.0);
    }

    #[test]
    fn hyperbolic_passes_validation() {
        for n in [2, 3, 10, 1000] {
            assert!(validate_plant(&builtin_speed_hyperbolic(), n).is_valid());
        }
    }

    #[test]
    fn constant_speed_with_loose_k_passes() {
        let s = SpeedFunction::constant(0.7).unwrap();
        assert!(validate_plant(&s, 200).is_valid());
    }

    #[test]
    fn increasing_speed_fails_monotonicity() {
        let s = SpeedFunction::new("1+sin", |w| 1.0 + w.sin(), |w| w.cos(), 1.0).unwrap();
        let report = validate_plant(&s, 500);
        assert!(!report.is_valid());
        let fail = report.failures().next().unwrap();
        assert_eq!(fail.check, SpeedCheck::NonIncreasing);
        assert!(fail.violation_at.unwrap() < PI / 2.0);
    }

    #[test]
    fn non_finite_speed_is_reported() {
        let s = SpeedFunction::new("blows", |w| if w > 50.0 { f64::NAN } else { 1.0 }, |_| 0.0, 1.0)
            .unwrap();
        let report = validate_plant(&s, 101);
        let finite = report.entries.iter().find(|e| e.check == SpeedCheck::Finite).unwrap();
        assert!(!finite.passed);
        assert!(finite.detail.contains("invalid speed function"));
    }

    #[test]
    fn derivative_bound_violation() {
        let s = SpeedFunction::new("steep", |w| (-3.0 * w).exp(), |w| -3.0 * (-3.0 * w).exp(), 1.0)
            .unwrap();
        let report = validate_plant(&s, 100);
        assert!(report.failures().any(|e| e.check == SpeedCheck::DerivativeBound));
    }

    #[test]
    fn reference_profile_values() {
        let p = builtin_profile_paper(0.0).unwrap();
        assert!((p.eval(0.5) - 7.0).abs() < 1e-15);
        assert_eq!(p.breakpoints(), &[0.0]);
        assert_eq!(p.inf_bound(), 6.0);
        assert_eq!(p.sup_bound(), 7.0);
        let p1 = builtin_profile_paper(1.0).unwrap();
        assert!((p1.eval(1.0) - 7.0).abs() < 1e-14);
        assert_eq!(p1.sup_bound(), 8.0);
        assert!(builtin_profile_paper(-1.0).is_err());
    }

    #[test]
    fn reference_profile_mass_matches_antiderivative() {
        let p = builtin_profile_paper(0.0).unwrap();
        assert!((p.total_mass() - (6.0 + 2.0 / PI)).abs() < 1e-10);
        // partial mass: 6a + (1 - cos(πa))/π
        for a in [0.0, 0.013, 0.25, 0.5, 0.77, 0.999, 1.0] {
            let exact = 6.0 * a + (1.0 - (PI * a).cos()) / PI;
            assert!((p.mass(a) - exact).abs() < 1e-13, "a={a}");
        }
    }

    #[test]
    fn piecewise_constant_mass_and_limits() {
        let p = DensityProfile::piecewise_constant(&[0.0, 0.5], &[2.0, 4.0]).unwrap();
        assert_eq!(p.eval(0.5), 2.0);
        assert_eq!(p.eval(0.5000001), 4.0);
        assert!((p.mass(0.75) - 2.0).abs() < 1e-14);
        assert!((p.total_mass() - 3.0).abs() < 1e-14);
        let j = p.jumps();
        assert_eq!(j[1], Jump { x: 0.5, left: 2.0, right: 4.0 });
    }

    #[test]
    fn piecewise_linear_knots_become_breakpoints() {
        let p = DensityProfile::piecewise_linear(&[0.0, 0.25, 1.0], &[1.0, 3.0, 2.0]).unwrap();
        assert_eq!(p.breakpoints(), &[0.0, 0.25]);
        assert!((p.eval(0.125) - 2.0).abs() < 1e-15);
        assert_eq!(p.inf_bound(), 1.0);
        assert_eq!(p.sup_bound(), 3.0);
        // trapezoids: 0.25*2 + 0.75*2.5
        assert!((p.total_mass() - 2.375).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_breakpoints_and_bounds() {
        let f: ScalarFn = Arc::new(|_| 1.0);
        assert!(DensityProfile::from_pieces("x", vec![0.1], vec![f.clone()], 1.0, 1.0).is_err());
        assert!(DensityProfile::from_pieces(
            "x",
            vec![0.0, 0.5, 0.5],
            vec![f.clone(), f.clone(), f.clone()],
            1.0,
            1.0
        )
        .is_err());
        // declared sup below the actual max
        assert!(matches!(
            DensityProfile::smooth("x", |x| 1.0 + x, 1.0, 1.5),
            Err(PlantError::BoundViolation { .. })
        ));
        assert!(DensityProfile::smooth("neg", |x| x - 0.5, 0.1, 1.0).is_err());
    }

    #[test]
    fn l2_deviation_of_constant_offset() {
        let p = DensityProfile::constant(3.0).unwrap();
        assert!((l2_deviation(&p, 1.0, QuadratureRule::default()) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn equilibrium_spec() {
        assert!(EquilibriumSpec::new(0.0).is_err());
        let eq = EquilibriumSpec::new(1.0).unwrap();
        assert_eq!(eq.influx(&builtin_speed_hyperbolic()), 0.5);
    }
}
