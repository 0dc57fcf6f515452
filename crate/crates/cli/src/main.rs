//! `blockspin <command> --config <path> [--out <dir>]`
//!
//! Exit status: 0 when every check passes, 1 when a check fails or a
//! computation errors, 2 for usage and configuration errors.

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use blockspin_core::LatticeGeometry;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use commands::Outcome;
use config::RunConfig;
use output::Artifacts;

#[derive(Parser)]
#[command(name = "blockspin", version, about = "Block-spin critical points and the checks behind them")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the critical point and verify it
    Solve(RunArgs),
    /// Compare the solver with direct minimization of the action
    OracleCompare(RunArgs),
    /// Assemble the Green kernels and fit their decay
    GreenReport(RunArgs),
    /// Run the random-walk expansion on a truncated window
    RwReport(RunArgs),
    /// Compare Neumann kernels with their image sums
    ImagesReport(RunArgs),
    /// Run the randomized bound and identity checks
    LemmaSuite(RunArgs),
    /// Print the default configuration or the JSON schema
    Defaults {
        #[arg(value_enum, default_value = "config")]
        what: Printable,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Printable {
    Config,
    Schema,
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON run configuration; omitted fields take their defaults
    #[arg(long)]
    config: PathBuf,
    /// Directory for manifest.json, report.json and CSV files
    #[arg(long, default_value = "blockspin-out")]
    out: PathBuf,
}

type Runner = fn(&RunConfig, &LatticeGeometry, &mut Artifacts) -> Result<Outcome>;

#[derive(Serialize)]
struct Report<'a> {
    command: &'a str,
    pass: bool,
    failures: &'a [String],
    result: &'a serde_json::Value,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a RunConfig,
    geometry: blockspin_core::lattice::GeometryManifest,
    seconds: f64,
    files: &'a [String],
}

const SCHEMA: &str = include_str!("../config.schema.json");

enum Failure {
    Usage(anyhow::Error),
    Run(anyhow::Error),
}

fn run(name: &str, runner: Runner, args: &RunArgs) -> std::result::Result<bool, Failure> {
    let cfg = config::load(&args.config).map_err(Failure::Usage)?;
    let geom = LatticeGeometry::new(cfg.l, cfg.m).map_err(|e| Failure::Usage(e.into()))?;
    for w in cfg.solver.validate().map_err(|e| Failure::Usage(e.into()))? {
        eprintln!("warning: {w}");
    }
    execute(name, runner, &cfg, &geom, &args.out).map_err(Failure::Run)
}

fn execute(name: &str, runner: Runner, cfg: &RunConfig, geom: &LatticeGeometry, out: &Path) -> Result<bool> {
    let start = Instant::now();
    let mut artifacts = Artifacts::new(out)?;
    let outcome = runner(cfg, geom, &mut artifacts)?;
    let pass = outcome.failures.is_empty();
    artifacts.json(
        "report.json",
        &Report {
            command: name,
            pass,
            failures: &outcome.failures,
            result: &outcome.result,
        },
    )?;
    let mut files = artifacts.files.clone();
    files.push("manifest.json".into());
    artifacts.json(
        "manifest.json",
        &Manifest {
            command: name,
            version: env!("CARGO_PKG_VERSION"),
            config: cfg,
            geometry: geom.manifest(),
            seconds: start.elapsed().as_secs_f64(),
            files: &files,
        },
    )?;
    println!("{name}: {}", if pass { "PASS" } else { "FAIL" });
    for f in &outcome.failures {
        println!("  failed: {f}");
    }
    Ok(pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, runner, args): (&str, Runner, &RunArgs) = match &cli.command {
        Command::Solve(a) => ("solve", commands::solve, a),
        Command::OracleCompare(a) => ("oracle-compare", commands::oracle_compare, a),
        Command::GreenReport(a) => ("green-report", commands::green_report, a),
        Command::RwReport(a) => ("rw-report", commands::rw_report, a),
        Command::ImagesReport(a) => ("images-report", commands::images_report, a),
        Command::LemmaSuite(a) => ("lemma-suite", commands::lemma_suite_report, a),
        Command::Defaults { what } => {
            match what {
                Printable::Config => {
                    println!("{}", serde_json::to_string_pretty(&RunConfig::default()).expect("serializable"))
                }
                Printable::Schema => print!("{SCHEMA}"),
            }
            return ExitCode::SUCCESS;
        }
    };
    match run(name, runner, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
