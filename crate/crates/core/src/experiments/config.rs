//! JSON scenario files. Every key is optional; an empty object `{}` is the
//! reference scenario: λ(W) = 1/(1+W), ρ₀ = 6 + sin(πx), ρ_s = 1, σ = 0.02,
//! event-triggered, horizon 40.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::{ControllerParams, TriggerOptions};
use crate::plant::{builtin_profile_paper, validate_plant, DensityProfile, SpeedFunction};
use crate::quadrature::QuadratureRule;
use crate::scheduler::{RunOptions, ScheduleMode};
use crate::transport::SolverOptions;

use super::ExperimentError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// "hyperbolic" (1/(1+W)), "constant" ([c]) or "exponential" ([v, k]: v·e^{−kW}).
    pub speed: String,
    pub speed_params: Vec<f64>,
    /// "paper" (6 + sin(πx) + l·x⁴), "constant" or "table" (piecewise linear).
    pub profile: String,
    pub profile_l: f64,
    pub profile_value: f64,
    pub table_x: Vec<f64>,
    pub table_rho: Vec<f64>,
    /// Family parameter range for `stats`, inclusive.
    pub l_min: f64,
    pub l_max: f64,
    pub l_step: f64,
    pub rho_s: f64,
    pub sigma: f64,
    /// "event", "sampled", "custom" or "robust_fraction".
    pub mode: String,
    pub period: f64,
    pub custom_times: Vec<f64>,
    pub fraction: f64,
    pub t_end: f64,
    pub scan_dt: f64,
    pub bisect_tol: f64,
    pub scan_n: usize,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub h: f64,
    pub backtrack_tol: f64,
    pub w_ceiling: f64,
    pub quad_order: usize,
    pub quad_panels: usize,
    /// Density snapshot times; default: 8 evenly spaced instants in [0, t_end].
    pub snapshot_times: Option<Vec<f64>>,
    /// Spacing of the rows of trajectory.csv.
    pub output_dt: f64,
    /// Points per density snapshot.
    pub snapshot_n: usize,
    pub out_dir: PathBuf,
    pub eq8b_cap: bool,
    pub verify_eq16: bool,
    pub bin_width: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let solver = SolverOptions::default();
        let trigger = TriggerOptions::default();
        let quad = QuadratureRule::default();
        Self {
            speed: "hyperbolic".into(),
            speed_params: Vec::new(),
            profile: "paper".into(),
            profile_l: 0.0,
            profile_value: 1.0,
            table_x: Vec::new(),
            table_rho: Vec::new(),
            l_min: 1.0,
            l_max: 100.0,
            l_step: 1.0,
            rho_s: 1.0,
            sigma: 0.02,
            mode: "event".into(),
            period: 1.0,
            custom_times: Vec::new(),
            fraction: 0.9,
            t_end: 40.0,
            scan_dt: trigger.scan_dt,
            bisect_tol: trigger.bisect_tol,
            scan_n: trigger.scan_n,
            picard_tol: solver.picard_tol,
            picard_max_iter: solver.picard_max_iter,
            h: solver.h,
            backtrack_tol: solver.backtrack_tol,
            w_ceiling: solver.w_ceiling,
            quad_order: quad.order,
            quad_panels: quad.panels,
            snapshot_times: None,
            output_dt: 0.05,
            snapshot_n: 1001,
            out_dir: PathBuf::from("out"),
            eq8b_cap: true,
            verify_eq16: false,
            bin_width: 0.1,
        }
    }
}

fn config_err(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(config_err(format!("{name} must be positive, got {v}")))
            }
        };
        positive("rho_s", self.rho_s)?;
        positive("sigma", self.sigma)?;
        positive("t_end", self.t_end)?;
        positive("scan_dt", self.scan_dt)?;
        positive("bisect_tol", self.bisect_tol)?;
        positive("picard_tol", self.picard_tol)?;
        positive("h", self.h)?;
        positive("backtrack_tol", self.backtrack_tol)?;
        positive("w_ceiling", self.w_ceiling)?;
        positive("output_dt", self.output_dt)?;
        positive("bin_width", self.bin_width)?;
        if self.scan_n < 2 || self.snapshot_n < 2 {
            return Err(config_err("scan_n and snapshot_n must be at least 2"));
        }
        if self.picard_max_iter == 0 || self.quad_order == 0 || self.quad_panels == 0 {
            return Err(config_err(
                "picard_max_iter, quad_order and quad_panels must be positive",
            ));
        }
        if !(self.l_min >= 0.0 && self.l_max >= self.l_min && self.l_step > 0.0) {
            return Err(config_err(format!(
                "invalid l-range {}..{} step {}",
                self.l_min, self.l_max, self.l_step
            )));
        }
        if let Some(times) = &self.snapshot_times {
            if let Some(t) = times.iter().find(|t| !(**t >= 0.0 && **t <= self.t_end)) {
                return Err(config_err(format!("snapshot time {t} outside [0, t_end]")));
            }
        }
        self.schedule_mode()?
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        self.speed_function()?;
        self.initial_profile()?;
        Ok(())
    }

    pub fn speed_function(&self) -> Result<SpeedFunction, ExperimentError> {
        let p = &self.speed_params;
        let speed = match (self.speed.as_str(), p.len()) {
            ("hyperbolic", 0) => SpeedFunction::hyperbolic(),
            ("constant", 1) => SpeedFunction::constant(p[0])?,
            ("exponential", 2) => SpeedFunction::exponential(p[0], p[1])?,
            (name, n) => {
                return Err(config_err(format!(
                    "unknown speed law {name:?} with {n} parameters"
                )))
            }
        };
        let report = validate_plant(&speed, 1001);
        if let Some(f) = report.failures().next() {
            return Err(config_err(format!(
                "speed law fails {:?}: {}",
                f.check, f.detail
            )));
        }
        Ok(speed)
    }

    fn quadrature(&self) -> QuadratureRule {
        QuadratureRule {
            order: self.quad_order,
            panels: self.quad_panels,
        }
    }

    fn profile_with_l(&self, l: f64) -> Result<DensityProfile, ExperimentError> {
        let p = match self.profile.as_str() {
            "paper" => builtin_profile_paper(l)?,
            "constant" => DensityProfile::constant(self.profile_value)?,
            "table" => DensityProfile::piecewise_linear(&self.table_x, &self.table_rho)?,
            other => return Err(config_err(format!("unknown profile {other:?}"))),
        };
        Ok(p.with_quadrature(self.quadrature()))
    }

    pub fn initial_profile(&self) -> Result<DensityProfile, ExperimentError> {
        self.profile_with_l(self.profile_l)
    }

    pub fn family_parameters(&self) -> Vec<f64> {
        let n = ((self.l_max - self.l_min) / self.l_step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.l_min + k as f64 * self.l_step).collect()
    }

    /// Profiles for `stats`: the l-range for the "paper" profile, otherwise the
    /// single configured profile.
    pub fn family(&self) -> Result<Vec<DensityProfile>, ExperimentError> {
        if self.profile == "paper" {
            self.family_parameters()
                .into_iter()
                .map(|l| self.profile_with_l(l))
                .collect()
        } else {
            Ok(vec![self.initial_profile()?])
        }
    }

    pub fn params(&self) -> ControllerParams {
        ControllerParams {
            rho_s: self.rho_s,
            sigma: self.sigma,
        }
    }

    pub fn schedule_mode(&self) -> Result<ScheduleMode, ExperimentError> {
        Ok(match self.mode.as_str() {
            "event" | "event_triggered" => ScheduleMode::EventTriggered,
            "sampled" | "sampled_data" => ScheduleMode::SampledData {
                period: self.period,
            },
            "custom" => ScheduleMode::Custom {
                times: self.custom_times.clone(),
            },
            "robust_fraction" => ScheduleMode::RobustFraction {
                fraction: self.fraction,
            },
            other => return Err(config_err(format!("unknown mode {other:?}"))),
        })
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            solver: SolverOptions {
                h: self.h,
                picard_tol: self.picard_tol,
                picard_max_iter: self.picard_max_iter,
                backtrack_tol: self.backtrack_tol,
                w_ceiling: self.w_ceiling,
                ..SolverOptions::default()
            },
            trigger: TriggerOptions {
                scan_dt: self.scan_dt,
                bisect_tol: self.bisect_tol,
                scan_n: self.scan_n,
                eq8b_cap: self.eq8b_cap,
                ..TriggerOptions::default()
            },
            verify_eq16: self.verify_eq16,
        }
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        match &self.snapshot_times {
            Some(t) => t.clone(),
            None => (0..8).map(|k| self.t_end * k as f64 / 7.0).collect(),
        }
    }

    pub fn output_times(&self) -> Vec<f64> {
        let n = (self.t_end / self.output_dt - 1e-9).ceil() as usize;
        (0..=n)
            .map(|k| (k as f64 * self.output_dt).min(self.t_end))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_reference_scenario() {
        let cfg = ScenarioConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(cfg.sigma, 0.02);
        assert_eq!(cfg.schedule_mode().unwrap(), ScheduleMode::EventTriggered);
        assert_eq!(cfg.snapshot_times().len(), 8);
        assert_eq!(cfg.snapshot_times()[7], 40.0);
        assert_eq!(cfg.family_parameters().len(), 100);
        let out = cfg.output_times();
        assert_eq!(*out.last().unwrap(), 40.0);
        assert_eq!(out.len(), 801);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ScenarioConfig::from_json("{").is_err());
        assert!(ScenarioConfig::from_json(r#"{"sigma": -1}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"nonsense": 1}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"mode": "sometimes"}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"speed": "constant"}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"profile": "table"}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"mode": "sampled", "period": 0}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"snapshot_times": [50]}"#).is_err());
    }

    #[test]
    fn table_and_modes() {
        let cfg = ScenarioConfig::from_json(
            r#"{"profile": "table", "table_x": [0, 0.5, 1], "table_rho": [1, 2, 1],
                "mode": "custom", "custom_times": [0, 0.5, 1.5]}"#,
        )
        .unwrap();
        assert_eq!(cfg.initial_profile().unwrap().breakpoints(), &[0.0, 0.5]);
        assert!(matches!(
            cfg.schedule_mode().unwrap(),
            ScheduleMode::Custom { .. }
        ));
        assert_eq!(cfg.family().unwrap().len(), 1);
    }
}
