// SPDX-License-Identifier: MIT OR Apache-2.0

mod args;
mod commands;
mod common;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use serde_json::json;
use tracing_subscriber::EnvFilter;

use args::{Cli, Command, FileConfig, Overlay, SynthCommand};
use common::{usage, UsageError};

fn load_config(path: Option<&PathBuf>) -> anyhow::Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).map_err(|e| usage(format!("config {}: {}", path.display(), e.message())))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = load_config(cli.config.as_ref())?;
    let out_dir = cli
        .out_dir
        .or(file.out_dir)
        .or_else(|| std::env::var_os("TCODER_OUT_DIR").map(PathBuf::from));
    match cli.command {
        Command::Synth(SynthCommand::Planted(a)) => commands::synth::planted(a.overlay(file.synth.planted), out_dir),
        Command::Synth(SynthCommand::Toylm(a)) => commands::synth::toylm(a.overlay(file.synth.toylm), out_dir),
        Command::Train(a) => commands::train::run(a.overlay(file.train), out_dir),
        Command::Eval(a) => commands::eval::run(a.overlay(file.eval), out_dir),
        Command::Sample(a) => commands::sample::run(a.overlay(file.sample), out_dir),
        Command::Score(a) => commands::score::run(a.overlay(file.score), out_dir),
        Command::Convert(a) => commands::convert::run(a.overlay(file.convert), out_dir),
        Command::Report(a) => commands::report::run(a.overlay(file.report), out_dir),
    }
}

/// Stable identifier for the one-line error record.
fn error_kind(e: &anyhow::Error) -> &'static str {
    if e.is::<UsageError>() {
        return "usage";
    }
    for cause in e.chain() {
        if let Some(core) = cause.downcast_ref::<tcoder_core::Error>() {
            return core.kind();
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
        if cause.is::<serde_json::Error>() {
            return "json";
        }
    }
    "other"
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(level)))
        .with_writer(std::io::stderr)
        .init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = error_kind(&e);
            let line = json!({ "error": kind, "message": format!("{e:#}") });
            eprintln!("{line}");
            if kind == "usage" {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
