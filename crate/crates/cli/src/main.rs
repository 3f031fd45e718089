//! `flowfeat`: extract flow features from captures, profile datasets and
//! score classifier predictions.

mod analyze;
mod config;
mod evaluate;
mod extract;
mod manifest;
mod source;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{ArgAction, Parser, Subcommand};

use crate::config::Loaded;

#[derive(Parser)]
#[command(name = "flowfeat", version, about)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one feature row per flow, FlowPic files and a run manifest.
    Extract {
        #[arg(long)]
        config: PathBuf,
        /// Replace a config value, e.g. `flow.idle_timeout=30` or `plugins.0.n=100`.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Write per-label statistics, protocol and unopened-TCP reports.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Score `id,label` predictions against ground truth.
    Evaluate {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_enum, default_value = "multiclass")]
        mode: evaluate::Mode,
        /// Positive class for challenge mode.
        #[arg(long)]
        positive: Option<String>,
        /// Also write the metrics as JSON here.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

enum Outcome {
    Done,
    /// Some inputs failed; see the manifest.
    Partial,
}

fn run(command: Command) -> Result<Outcome> {
    let outcome = |partial: bool| if partial { Outcome::Partial } else { Outcome::Done };
    match command {
        Command::Extract { config, overrides } => {
            let loaded = Loaded::from_file(&config, &overrides)?;
            Ok(outcome(extract::run(&loaded)?.partial()))
        }
        Command::Analyze { config, overrides } => {
            let loaded = Loaded::from_file(&config, &overrides)?;
            Ok(outcome(analyze::run(&loaded)?.partial()))
        }
        Command::Evaluate {
            truth,
            pred,
            mode,
            positive,
            output,
        } => {
            let (text, json) = evaluate::run(&truth, &pred, mode, positive.as_deref())?;
            print!("{text}");
            if let Some(path) = output {
                let mut body = serde_json::to_string_pretty(&json)?;
                body.push('\n');
                std::fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))?;
            }
            Ok(Outcome::Done)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage_error = e.use_stderr();
            let _ = e.print();
            return if usage_error {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => {
            log::warn!("some inputs failed; see manifest.json");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
