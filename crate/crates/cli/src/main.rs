//! Command-line entry point: `tflg run <experiment>` executes one
//! pipeline and writes its tables and region masks, `tflg check` runs
//! the full acceptance suite.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tflg::config::{ExperimentKind, RunConfig};
use tflg::report::ExpReport;
use tflg::table::RunContext;
use tflg::{boundsweep, check, exp1, exp2, exp3};

#[derive(Parser)]
#[command(name = "tflg", about = "Time-frequency localization experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its result tables.
    Run {
        /// Which experiment to run.
        experiment: ExperimentKind,
        /// TOML configuration file; defaults to the built-in configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the seed from the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to `out/<experiment>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the acceptance checks and report one line per check.
    Check,
}

fn run_experiment(
    kind: ExperimentKind,
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> anyhow::Result<bool> {
    let mut cfg = match config {
        Some(path) => RunConfig::load(&path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate(kind)?;

    let out_dir = out.unwrap_or_else(|| PathBuf::from("out").join(kind.to_string()));
    std::fs::create_dir_all(&out_dir)?;
    let ctx = RunContext::new(&cfg, &out_dir);

    let report: ExpReport = match kind {
        ExperimentKind::Exp1 => exp1::run(&cfg, &ctx)?,
        ExperimentKind::Exp2 => exp2::run(&cfg, &ctx)?,
        ExperimentKind::Exp3 => exp3::run(&cfg, &ctx)?,
        ExperimentKind::Bounds => boundsweep::run(&cfg, &ctx)?,
    };

    for table in &report.tables {
        let path = ctx.write_table(table)?;
        println!("wrote {}", path.display());
    }
    for (stem, region) in &report.masks {
        let path = ctx.out_dir().join(format!("{stem}.pbm"));
        region.write_pbm(&path)?;
        println!("wrote {}", path.display());
    }
    for item in &report.items {
        let verdict = if item.passed { "ok" } else { "FAIL" };
        println!("{verdict} {}: {}", item.name, item.detail);
    }

    let failures = report.failures();
    if failures.is_empty() {
        Ok(true)
    } else {
        let listing: Vec<serde_json::Value> = failures
            .iter()
            .map(|i| serde_json::json!({ "name": i.name, "detail": i.detail }))
            .collect();
        println!("{}", serde_json::json!({ "failures": listing }));
        Ok(false)
    }
}

fn run_checks() -> bool {
    let summaries = check::all();
    for s in &summaries {
        println!("{s}");
    }
    let failures: Vec<serde_json::Value> = summaries
        .iter()
        .filter(|s| !s.passed)
        .map(|s| serde_json::json!({ "name": s.name, "detail": s.detail }))
        .collect();
    if failures.is_empty() {
        println!("all {} checks passed", summaries.len());
        true
    } else {
        println!("{}", serde_json::json!({ "failures": failures }));
        false
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            experiment,
            config,
            seed,
            out,
        } => run_experiment(experiment, config, seed, out),
        Command::Check => Ok(run_checks()),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
