use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use dcsim::config::{ConfigDoc, RunConfig};
use dcsim::system::System;
use dcsim::telemetry::{emit, Report, ReportFormat};
use dcsim::validate::{run_validation, ValidateOptions};
use dcsim::SimError;

#[derive(Parser)]
#[command(name = "dcsim", version, about = "DRAM cache simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Overrides engine.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Report destination; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Writes a log of every dispatched event.
    #[arg(long, global = true)]
    debug_events: Option<PathBuf>,
    /// Sets a config key, e.g. `--set traffic.read_pct=0.67`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Runs one configuration.
    Run { config: PathBuf },
    /// Runs one configuration per value of `axis`.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Runs the built-in validation suite.
    Validate {
        /// Only checks whose name contains this text.
        #[arg(long)]
        filter: Option<String>,
        /// Simulated time per battery point.
        #[arg(long, default_value_t = 1_000_000.0)]
        duration_ns: f64,
    },
}

fn load(path: &Path, common: &Common) -> Result<ConfigDoc, SimError> {
    let mut doc = ConfigDoc::load(path)?;
    doc.apply_env(std::env::vars())?;
    for s in &common.sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| dcsim::ConfigError::invalid(s.as_str(), "expected KEY=VALUE"))?;
        doc.set(k.trim(), v)?;
    }
    if let Some(seed) = common.seed {
        doc.set("engine.seed", &seed.to_string())?;
    }
    Ok(doc)
}

fn format_for(common: &Common, cfg: Option<&RunConfig>) -> ReportFormat {
    match common.format {
        Some(Format::Csv) => ReportFormat::Csv,
        Some(Format::Json) => ReportFormat::Json,
        None => cfg
            .map(|c| c.output.format.into())
            .unwrap_or(ReportFormat::Csv),
    }
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), SimError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|source| SimError::Io {
            path: p.to_path_buf(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_one(cfg: &RunConfig, debug_events: Option<&Path>) -> Result<Report, SimError> {
    let mut sys = System::new(cfg)?;
    sys.record_events(debug_events.is_some());
    let out = sys.run()?;
    if let (Some(p), Some(log)) = (debug_events, &out.event_log) {
        write_out(Some(p), log)?;
    }
    Ok(out.report(cfg))
}

fn real_main(cli: Cli) -> Result<bool, SimError> {
    let common = &cli.common;
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(config, common)?.finish()?;
            let report = run_one(&cfg, common.debug_events.as_deref())?;
            let out = common.out.as_deref().or(cfg.output.path.as_deref());
            write_out(out, &emit(&[report], format_for(common, Some(&cfg))))?;
            Ok(true)
        }
        Command::Sweep {
            config,
            axis,
            values,
        } => {
            let doc = load(config, common)?;
            let base = doc.build()?;
            let mut cfgs = Vec::new();
            for v in values {
                let mut point = doc.clone();
                point.set(axis, v)?;
                let mut cfg = point.finish()?;
                cfg.run_id = format!("{}:{}={}", base.run_id, axis, v.trim());
                cfgs.push(cfg);
            }
            if common.debug_events.is_some() {
                eprintln!("--debug-events is ignored for sweeps");
            }
            let reports = cfgs
                .par_iter()
                .map(|c| run_one(c, None))
                .collect::<Result<Vec<_>, _>>()?;
            let out = common.out.as_deref().or(base.output.path.as_deref());
            write_out(out, &emit(&reports, format_for(common, Some(&base))))?;
            Ok(true)
        }
        Command::Validate {
            filter,
            duration_ns,
        } => {
            let opts = ValidateOptions {
                seed: common.seed.unwrap_or(1),
                duration_ns: *duration_ns,
                filter: filter.clone(),
            };
            let outcome = run_validation(&opts);
            eprint!("{}", outcome.table());
            if !outcome.reports.is_empty() {
                write_out(
                    common.out.as_deref(),
                    &emit(&outcome.reports, format_for(common, None)),
                )?;
            }
            if !outcome.passed() {
                let names: Vec<&str> = outcome.failures().map(|c| c.name.as_str()).collect();
                eprintln!("failed: {}", names.join(", "));
            }
            Ok(outcome.passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
