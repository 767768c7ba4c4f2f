use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fabflow::experiments::acceptance::{AcceptanceOptions, CRITERIA};
use fabflow::experiments::{cmd_run, cmd_stats, cmd_verify, ExperimentError, ScenarioConfig};

/// Simulator for a re-entrant production line under event-triggered and
/// sampled-data influx control.
#[derive(Parser)]
#[command(name = "fabflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ScenarioArgs {
    /// JSON scenario file; missing keys take their defaults.
    config: PathBuf,
    /// Output directory, overriding `out_dir` from the file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Do not cap gaps at 1/λ(0).
    #[arg(long)]
    no_eq8b_cap: bool,
    /// Check custom event sequences against the robustness window.
    #[arg(long)]
    verify_eq16: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one closed loop and write trajectory, event and snapshot CSVs.
    Run(ScenarioArgs),
    /// Pool inter-event gaps over the profile family and write a histogram.
    Stats(ScenarioArgs),
    /// Run the acceptance checks; exit status 0 iff all pass.
    Verify {
        /// Criterion ids to run (comma separated); all by default.
        #[arg(long, value_delimiter = ',')]
        filter: Vec<u32>,
        /// Picard tolerance for the runs under test.
        #[arg(long)]
        picard_tol: Option<f64>,
    },
}

fn load(args: &ScenarioArgs) -> Result<ScenarioConfig, ExperimentError> {
    let mut cfg = ScenarioConfig::load(&args.config)?;
    if args.no_eq8b_cap {
        cfg.eq8b_cap = false;
    }
    if args.verify_eq16 {
        cfg.verify_eq16 = true;
    }
    Ok(cfg)
}

fn configure_workers() {
    if let Some(n) = std::env::var("FABFLOW_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        // Fails only if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn main() -> ExitCode {
    configure_workers();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => load(&args).and_then(|cfg| {
            let art = cmd_run(&cfg, args.out.as_deref())?;
            println!(
                "{} events, {} files in {}",
                art.run.log.len(),
                art.files.len(),
                art.out_dir.display()
            );
            for w in &art.run.log.warnings {
                eprintln!("warning: {w}");
            }
            Ok(0)
        }),
        Command::Stats(args) => load(&args).and_then(|cfg| {
            let stats = cmd_stats(&cfg, args.out.as_deref())?;
            println!(
                "{} gaps: min {:.6} max {:.6} mean {:.6}",
                stats.gaps.len(),
                stats.min,
                stats.max,
                stats.mean
            );
            Ok(0)
        }),
        Command::Verify { filter, picard_tol } => {
            let ids = if filter.is_empty() {
                CRITERIA.to_vec()
            } else {
                filter
            };
            let mut opts = AcceptanceOptions::default();
            if let Some(tol) = picard_tol {
                opts.run.solver.picard_tol = tol;
            }
            let report = cmd_verify(&ids, opts);
            print!("{}", report.render());
            Ok(if report.all_passed() { 0 } else { 1 })
        }
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("fabflow: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
