//! Scenario files, CSV artifacts and the `run` / `stats` / `verify` commands.

pub mod acceptance;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::controller::ControllerError;
use crate::plant::PlantError;
use crate::scheduler::{interexecution_stats, run_closed_loop, ClosedLoopRun, GapStatistics, SchedulerError};
use crate::transport::TransportError;

use acceptance::{Acceptance, AcceptanceOptions, CriterionResult};
pub use config::ScenarioConfig;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("config error: {0}")]
    Plant(#[from] PlantError),
    #[error("solver error: {0}")]
    Scheduler(#[from] SchedulerError),
    #[error("solver error: {0}")]
    Controller(#[from] ControllerError),
    #[error("solver error: {0}")]
    Transport(#[from] TransportError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl ExperimentError {
    /// 2 for bad input, 3 for solver diagnostics, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) | ExperimentError::Plant(_) => 2,
            ExperimentError::Scheduler(SchedulerError::InvalidMode(_))
            | ExperimentError::Scheduler(SchedulerError::InvalidHorizon(_)) => 2,
            ExperimentError::Scheduler(_)
            | ExperimentError::Controller(_)
            | ExperimentError::Transport(_) => 3,
            ExperimentError::Io(_) => 1,
        }
    }
}

/// What `run` produced.
#[derive(Debug)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub run: ClosedLoopRun,
    pub files: Vec<PathBuf>,
}

/// Runs one closed loop and writes trajectory.csv, events.csv and the density
/// snapshots into `out_dir` (or the configured directory).
pub fn cmd_run(cfg: &ScenarioConfig, out_dir: Option<&Path>) -> Result<RunArtifacts, ExperimentError> {
    let dir = out_dir.map_or_else(|| cfg.out_dir.clone(), Path::to_path_buf);
    let run = run_closed_loop(
        &cfg.initial_profile()?,
        &cfg.speed_function()?,
        cfg.params(),
        &cfg.schedule_mode()?,
        cfg.t_end,
        &cfg.run_options(),
    )?;
    let rows = output::trajectory_rows(&run, &cfg.output_times(), cfg.initial_profile()?.quadrature())?;
    let mut files = Vec::new();
    let mut emit = |name: String, contents: String| -> Result<(), ExperimentError> {
        output::write(&dir, &name, &contents)?;
        files.push(dir.join(name));
        Ok(())
    };
    emit("trajectory.csv".into(), output::trajectory_csv(&rows))?;
    emit("events.csv".into(), output::events_csv(&run.log))?;
    for t in cfg.snapshot_times() {
        emit(
            output::snapshot_file_name(t),
            output::snapshot_csv(&run.trajectory, t, cfg.snapshot_n)?,
        )?;
    }
    Ok(RunArtifacts {
        out_dir: dir,
        run,
        files,
    })
}

/// Event-triggered runs over the configured family; writes gaps_histogram.csv
/// and gaps.csv.
pub fn cmd_stats(cfg: &ScenarioConfig, out_dir: Option<&Path>) -> Result<GapStatistics, ExperimentError> {
    let dir = out_dir.map_or_else(|| cfg.out_dir.clone(), Path::to_path_buf);
    let family = cfg.family()?;
    let parameters = if cfg.profile == "paper" {
        cfg.family_parameters()
    } else {
        vec![cfg.profile_l]
    };
    let stats = interexecution_stats(
        &family,
        &cfg.speed_function()?,
        cfg.params(),
        cfg.t_end,
        &cfg.run_options(),
        cfg.bin_width,
    )?;
    output::write(&dir, "gaps_histogram.csv", &output::histogram_csv(&stats))?;
    output::write(&dir, "gaps.csv", &output::gaps_csv(&stats, &parameters))?;
    Ok(stats)
}

/// Report of `verify`: one result per requested criterion plus reference constants.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub results: Vec<CriterionResult>,
    pub info: Vec<(&'static str, f64)>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    /// Tab-separated lines: `INFO` rows first, then `id status measured bound description`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (name, value) in &self.info {
            out.push_str(&format!("INFO\t{name}\t{value:.9}\n"));
        }
        for r in &self.results {
            out.push_str(&format!("{r}\n"));
        }
        out
    }
}

pub fn cmd_verify(ids: &[u32], opts: AcceptanceOptions) -> VerifyReport {
    let suite = Acceptance::new(opts);
    let results = suite.run(ids);
    VerifyReport {
        results,
        info: suite.info(),
    }
}
