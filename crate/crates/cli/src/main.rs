//! `hsmp`: synthetic data, pair generation, splitting, inference,
//! evaluation and analytics over report corpora.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.

mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use crate::args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(
        env_logger::Env::default().default_filter_or(if cli.global.verbose {
            "debug"
        } else {
            "warn"
        }),
    )
    .init();

    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.kind.code())
        }
    }
}
