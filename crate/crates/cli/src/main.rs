use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

mod config;
mod opspec;
mod pipeline;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Pipeline(gaborfio::Error),
    #[error("io error: {0}")]
    Io(String),
}

impl From<gaborfio::Error> for CliError {
    fn from(e: gaborfio::Error) -> Self {
        use gaborfio::Error::*;
        match e {
            Model(_) | Size(_) | Unit { .. } => CliError::Config(e.to_string()),
            other => CliError::Pipeline(other),
        }
    }
}

/// Variant name of a library error.
fn error_kind(e: &gaborfio::Error) -> String {
    let dbg = format!("{e:?}");
    dbg.split(|c: char| !c.is_alphanumeric()).next().unwrap_or_default().to_string()
}

#[derive(Parser)]
#[command(name = "gaborfio", version, about = "Gabor-matrix experiments for discrete Fourier integral operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Override a config key, `key=value`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn write_report(out: &std::path::Path, report: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(report).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(out.join("report.json"), text + "\n").map_err(|e| CliError::Io(e.to_string()))
}

fn main() -> ExitCode {
    let Command::Run { config, set, threads, out } = Cli::parse().command;
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let cfg = match std::fs::read_to_string(&config)
        .map_err(|e| CliError::Config(format!("{}: {e}", config.display())))
        .and_then(|text| config::parse(&text, &set))
    {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("error: {}: {e}", out.display());
        return ExitCode::from(2);
    }
    let result = pipeline::run(&cfg, &out).and_then(|o| write_report(&out, &o.report).map(|_| o.pass));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(CliError::Pipeline(e)) => {
            eprintln!("error: {e}");
            let report = json!({
                "pipeline": cfg.pipeline,
                "operator": cfg.operator,
                "pass": false,
                "error": { "kind": error_kind(&e), "message": e.to_string() },
            });
            if let Err(w) = write_report(&out, &report) {
                eprintln!("error: {w}");
            }
            ExitCode::FAILURE
        }
        Err(e @ CliError::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
