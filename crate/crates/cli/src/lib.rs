//! Command-line driver: reads a run configuration, executes one subcommand
//! and writes CSV/JSON artifacts plus a manifest.
//!
//! Exit codes: 0 when every requested check passes, 1 when a check fails,
//! 2 for an invalid request and 3 for a failure during computation.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser};
use serde_json::json;

pub use artifacts::Artifacts;
pub use commands::{Command, Outcome};
pub use config::{parse_config, parse_config_str, ConfigIssue, RunConfig};
pub use error::CliError;

use config::InitialSpec;

#[derive(Debug, Parser)]
#[command(
    name = "navslip",
    version,
    about = "Damped Navier–Stokes Galerkin solver with slip walls"
)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long, short)]
    pub config: PathBuf,
    /// Output directory; overrides `output.directory`.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Single-threaded execution for bit-exact reproduction.
    #[arg(long)]
    pub serial: bool,
}

/// Result of a whole invocation.
#[derive(Debug)]
pub struct Report {
    pub exit_code: i32,
    pub out_dir: Option<PathBuf>,
    pub failed: Vec<String>,
}

fn manifest(cmd: Command, cfg: &RunConfig, args: &RunArgs, outcome: &Outcome, files: &[String]) -> serde_json::Value {
    let mut seeds = serde_json::Map::new();
    if let InitialSpec::Random { seed, .. } = cfg.initial {
        seeds.insert("initial".into(), json!(seed));
    }
    if cmd == Command::Twin {
        seeds.insert("perturbation".into(), json!(cfg.study.seed));
    }
    json!({
        "tool": "navslip",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": cmd.name(),
        "serial": args.serial,
        "format_versions": {
            "config": config::CONFIG_FORMAT_VERSION,
            "basis": navslip_core::basis::BASIS_FORMAT_VERSION,
            "operator": navslip_core::operators::OPERATOR_FORMAT_VERSION,
        },
        "config": cfg,
        "seeds": seeds,
        "run": outcome.manifest,
        "files": files,
        "failed_checks": outcome.failed,
        "timing_file": "timing.json",
    })
}

fn execute_in(cmd: Command, cfg: &RunConfig, out: &mut Artifacts, serial: bool) -> Result<Outcome, CliError> {
    if serial {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| CliError::Unsupported(format!("cannot build a serial thread pool: {e}")))?;
        pool.install(|| commands::execute(cmd, cfg, out))
    } else {
        commands::execute(cmd, cfg, out)
    }
}

fn write_error(dir: Option<&Path>, value: &serde_json::Value) {
    let text = serde_json::to_string_pretty(value).unwrap_or_default();
    eprintln!("{text}");
    if let Some(d) = dir {
        if std::fs::create_dir_all(d).is_ok() {
            let _ = std::fs::write(d.join("error.json"), text + "\n");
        }
    }
}

/// Parse, execute and write every artifact; never panics on bad input.
pub fn run(cmd: Command, args: &RunArgs) -> Report {
    let start = Instant::now();
    let cfg = match parse_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            write_error(args.out.as_deref(), &e.to_json());
            return Report {
                exit_code: e.exit_code(),
                out_dir: args.out.clone(),
                failed: Vec::new(),
            };
        }
    };
    let dir = args.out.clone().unwrap_or_else(|| cfg.output.directory.clone());
    let fail = |e: CliError| {
        write_error(Some(&dir), &e.to_json());
        Report {
            exit_code: e.exit_code(),
            out_dir: Some(dir.clone()),
            failed: Vec::new(),
        }
    };
    let mut out = match Artifacts::create(&dir, cfg.output.csv, cfg.output.json) {
        Ok(a) => a,
        Err(e) => return fail(e),
    };
    let outcome = match execute_in(cmd, &cfg, &mut out, args.serial) {
        Ok(o) => o,
        Err(e) => return fail(e),
    };
    let files = out.files().to_vec();
    let written = out
        .always_json("manifest.json", &manifest(cmd, &cfg, args, &outcome, &files))
        .and_then(|_| {
            out.always_json(
                "timing.json",
                &json!({ "wall_seconds": start.elapsed().as_secs_f64(), "serial": args.serial }),
            )
        });
    if let Err(e) = written {
        return fail(e);
    }
    if !outcome.failed.is_empty() {
        write_error(
            Some(&dir),
            &json!({ "error": "check_failed", "failed_checks": outcome.failed }),
        );
    }
    Report {
        exit_code: if outcome.failed.is_empty() { 0 } else { 1 },
        out_dir: Some(dir),
        failed: outcome.failed,
    }
}
