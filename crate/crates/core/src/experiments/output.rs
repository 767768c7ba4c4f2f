//! CSV artifacts. Numbers are written with 17 significant digits so that every
//! value parses back to the same double.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::controller::lyapunov_v;
use crate::plant::{l2_deviation, DensityView};
use crate::quadrature::QuadratureRule;
use crate::scheduler::{ClosedLoopRun, EventLog, GapStatistics};
use crate::transport::Trajectory;

use super::ExperimentError;

/// `{:.16e}`: one leading digit plus 16 decimals.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub w: f64,
    pub phi: f64,
    pub u: f64,
    pub rho_at_0: f64,
    pub rho_at_1: f64,
    pub outflux: f64,
    pub v: f64,
    pub l2_deviation: f64,
}

pub fn trajectory_row(
    run: &ClosedLoopRun,
    t: f64,
    rule: QuadratureRule,
) -> Result<TrajectoryRow, ExperimentError> {
    let traj = &run.trajectory;
    let slice = traj.slice(t)?;
    let w = traj.w_at(t)?;
    Ok(TrajectoryRow {
        t,
        w,
        phi: slice.phi(),
        u: traj.input_at(t).unwrap_or(f64::NAN),
        rho_at_0: slice.boundary_value(),
        rho_at_1: traj.density_at(t, 1.0)?,
        outflux: traj.outflux(t)?,
        v: lyapunov_v(
            &slice,
            run.params.rho_s,
            run.params.sigma,
            run.options.trigger.scan_n,
        )?,
        l2_deviation: l2_deviation(&slice, run.params.rho_s, rule),
    })
}

pub fn trajectory_rows(
    run: &ClosedLoopRun,
    times: &[f64],
    rule: QuadratureRule,
) -> Result<Vec<TrajectoryRow>, ExperimentError> {
    times
        .par_iter()
        .map(|&t| trajectory_row(run, t, rule))
        .collect()
}

pub fn trajectory_csv(rows: &[TrajectoryRow]) -> String {
    let mut out = String::from("t,W,Phi,u,rho_at_0,rho_at_1,outflux,V,L2_deviation\n");
    for r in rows {
        let fields = [
            r.t,
            r.w,
            r.phi,
            r.u,
            r.rho_at_0,
            r.rho_at_1,
            r.outflux,
            r.v,
            r.l2_deviation,
        ];
        let line: Vec<String> = fields.iter().map(|&v| num(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn events_csv(log: &EventLog) -> String {
    let mut out = String::from("i,t_i,u_i,V_i,gap,reason\n");
    for e in &log.entries {
        let gap = e.gap.map(num).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            e.index,
            num(e.t_i),
            num(e.u_i),
            num(e.v_i),
            gap,
            e.reason.as_str()
        );
    }
    out
}

/// ρ(t, x) on `n` uniform points of [0, 1]; x = 0 holds the boundary value.
pub fn snapshot_csv(traj: &Trajectory, t: f64, n: usize) -> Result<String, ExperimentError> {
    let slice = traj.slice(t)?;
    let values = slice.sample_uniform(n);
    let mut out = String::from("x,rho\n");
    for (k, rho) in values.iter().enumerate() {
        let x = k as f64 / (n - 1) as f64;
        let _ = writeln!(out, "{},{}", num(x), num(*rho));
    }
    Ok(out)
}

pub fn snapshot_file_name(t: f64) -> String {
    format!("profile_t{t:.3}.csv")
}

/// Bins, then one tagged row `summary,<min>,<max>,<mean>`.
pub fn histogram_csv(stats: &GapStatistics) -> String {
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for b in &stats.bins {
        let _ = writeln!(out, "{},{},{}", num(b.lo), num(b.hi), b.count);
    }
    let _ = writeln!(
        out,
        "summary,{},{},{}",
        num(stats.min),
        num(stats.max),
        num(stats.mean)
    );
    out
}

/// One row per completed gap: family member, its parameter, gap.
pub fn gaps_csv(stats: &GapStatistics, parameters: &[f64]) -> String {
    let mut out = String::from("member,l,gap\n");
    let mut k = 0;
    for (m, &events) in stats.events_per_member.iter().enumerate() {
        let l = parameters.get(m).copied().unwrap_or(f64::NAN);
        for _ in 0..events.saturating_sub(1) {
            let _ = writeln!(out, "{m},{},{}", num(l), num(stats.gaps[k]));
            k += 1;
        }
    }
    out
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, 6.636619772367581, 1e-300, -2.5e17] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn snapshot_names() {
        assert_eq!(snapshot_file_name(5.714285714), "profile_t5.714.csv");
        assert_eq!(snapshot_file_name(0.0), "profile_t0.000.csv");
    }
}
