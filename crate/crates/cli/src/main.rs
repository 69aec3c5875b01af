//! `zaremba <SUBCOMMAND> <CONFIG>`: run one experiment from a TOML config.

mod config;
mod expr;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crate::config::ExperimentConfig;
use crate::run::{RunError, Subcommand};

/// Overrides `output_dir` from the config.
const OUTPUT_ENV: &str = "ZAREMBA_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "zaremba", version, about = "Numerical experiments for weighted mixed boundary value problems")]
struct Cli {
    #[arg(value_enum)]
    subcommand: Subcommand,
    /// TOML experiment config.
    config: PathBuf,
}

fn read(path: &PathBuf) -> Result<String, RunError> {
    std::fs::read_to_string(path).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))
}

fn validate(path: &PathBuf) -> Result<ExitCode, RunError> {
    let text = read(path)?;
    let cfg = ExperimentConfig::parse(&text).map_err(RunError::Config)?;
    let violations = cfg.validate();
    for v in &violations {
        println!("{v}");
    }
    Ok(if violations.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.subcommand {
        Subcommand::Validate => validate(&cli.config),
        cmd => read(&cli.config).and_then(|text| {
            let dir = std::env::var_os(OUTPUT_ENV).map(PathBuf::from);
            let summary = run::run(cmd, &text, dir)?;
            println!("{}", serde_json::to_string_pretty(&summary.summary).unwrap_or_default());
            eprintln!("summary written to {}", summary.path.display());
            Ok(ExitCode::SUCCESS)
        }),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
