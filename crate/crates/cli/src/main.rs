//! `sarcasm`: reproducible pipeline stages for context-aware sarcasm
//! detection. Every stage writes its outputs plus one `manifest.json`.
//!
//! Exit codes: 0 success, 1 unexpected failure, 2 usage or configuration,
//! 3 numerical failure, 4 external service failure.

mod artifacts;
mod commands;
mod config;
mod error;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

#[derive(Debug, Parser)]
#[command(name = "sarcasm", version, about = "Context-aware sarcasm detection pipeline")]
struct Cli {
    #[command(subcommand)]
    command: commands::Command,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.code).unwrap_or(1))
        }
    }
}
