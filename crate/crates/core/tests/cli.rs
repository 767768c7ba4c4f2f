use std::path::Path;
use std::process::Command;

fn fabflow() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fabflow"))
}

fn write_config(dir: &Path, json: &str) -> std::path::PathBuf {
    let path = dir.join("scenario.json");
    std::fs::write(&path, json).unwrap();
    path
}

fn read_rows(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap_or(f64::NAN)).collect())
        .collect();
    (header, rows)
}

#[test]
fn run_writes_all_artifacts_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"t_end": 6, "output_dt": 0.5}"#);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let status = fabflow()
            .args(["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(status.success());
    }
    let (header, rows) = read_rows(&out_a.join("trajectory.csv"));
    assert_eq!(
        header,
        ["t", "W", "Phi", "u", "rho_at_0", "rho_at_1", "outflux", "V", "L2_deviation"]
    );
    assert_eq!(rows.len(), 13);
    assert!((rows[0][1] - 6.636619772367581).abs() < 1e-12);
    assert!((rows[0][6] - 0.785687932468559).abs() < 1e-12);

    let events = std::fs::read_to_string(out_a.join("events.csv")).unwrap();
    assert!(events.starts_with("i,t_i,u_i,V_i,gap,reason\n0,0.0000000000000000e0,"));
    assert!(events.lines().last().unwrap().contains(",,"));

    let snaps: Vec<_> = std::fs::read_dir(&out_a)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().into_string().unwrap())
        .filter(|n| n.starts_with("profile_t"))
        .collect();
    assert_eq!(snaps.len(), 8);
    assert!(out_a.join("profile_t6.000.csv").exists());

    for name in ["trajectory.csv", "events.csv", "profile_t3.429.csv"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
    }
}

#[test]
fn reference_scenario_converges() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"output_dt": 1.0}"#);
    let status = fabflow()
        .args(["run", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let (_, rows) = read_rows(&dir.path().join("trajectory.csv"));
    let last = rows.last().unwrap();
    assert_eq!(last[0], 40.0);
    assert!((last[4] - 1.0).abs() < 1e-6, "rho_at_0 {}", last[4]);
    assert!((last[5] - 1.0).abs() < 1e-6, "rho_at_1 {}", last[5]);
    assert!(last[8] <= rows[0][8]);
}

#[test]
fn equilibrium_scenario_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"profile": "constant", "profile_value": 1.0, "t_end": 5, "output_dt": 0.25}"#,
    );
    let status = fabflow()
        .args(["run", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let (_, rows) = read_rows(&dir.path().join("trajectory.csv"));
    for r in rows {
        assert_eq!(r[4], 1.0);
        assert_eq!(r[5], 1.0);
        assert_eq!(r[7], 0.0);
    }
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"sigma": "fast"}"#);
    let out = fabflow().args(["run", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config error"));
    let missing = fabflow().args(["stats", "/nonexistent/file.json"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn solver_diagnostics_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"w_ceiling": 2.0, "t_end": 2}"#);
    let out = fabflow()
        .args(["run", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn stats_writes_histogram_with_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"l_min": 1, "l_max": 3, "t_end": 10}"#);
    let status = fabflow()
        .env("FABFLOW_WORKERS", "2")
        .args(["stats", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(dir.path().join("gaps_histogram.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "bin_lo,bin_hi,count");
    let summary: Vec<&str> = lines.last().unwrap().split(',').collect();
    assert_eq!(summary[0], "summary");
    let (min, max): (f64, f64) = (summary[1].parse().unwrap(), summary[2].parse().unwrap());
    assert!(min > 0.0 && max <= 1.0 + 1e-8);
    let total: usize = lines[1..lines.len() - 1]
        .iter()
        .map(|l| l.split(',').nth(2).unwrap().parse::<usize>().unwrap())
        .sum();
    let gaps = std::fs::read_to_string(dir.path().join("gaps.csv")).unwrap();
    assert_eq!(total, gaps.lines().count() - 1);
}

#[test]
fn stats_on_equilibrium_has_one_bin() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"profile": "constant", "profile_value": 1.0, "t_end": 6}"#,
    );
    let status = fabflow()
        .args(["stats", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(dir.path().join("gaps_histogram.csv")).unwrap();
    let nonzero: Vec<&str> = text
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with("summary") && !l.ends_with(",0"))
        .collect();
    assert_eq!(nonzero.len(), 1);
    assert!(nonzero[0].starts_with("9.0000000000000002e-1,1.0000000000000000e0,"));
}

#[test]
fn no_cap_flag_allows_longer_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"profile": "constant", "profile_value": 1.0, "t_end": 5}"#,
    );
    let status = fabflow()
        .args([
            "run",
            cfg.to_str().unwrap(),
            "--no-eq8b-cap",
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let events = std::fs::read_to_string(dir.path().join("events.csv")).unwrap();
    // At equilibrium the trigger never fires, so without the cap there is one interval.
    assert_eq!(events.lines().count(), 2);
}

#[test]
fn verify_reports_and_sets_exit_status() {
    let out = fabflow().args(["verify", "--filter", "12"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("INFO\tc(rho0)\t0.12076"));
    assert!(text.contains("INFO\tT_tilde(0)\t0.67334"));
    assert!(text.lines().any(|l| l.starts_with("12\tPASS\t")));

    let degraded = fabflow()
        .args(["verify", "--filter", "2", "--picard-tol", "1e-2"])
        .output()
        .unwrap();
    assert_eq!(degraded.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&degraded.stdout)
        .lines()
        .any(|l| l.starts_with("2\tFAIL\t")));
}
