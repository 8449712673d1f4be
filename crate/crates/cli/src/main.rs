//! `pocdetect`: generate, inject, ingest, detect, baseline, eval, savings and
//! bench subcommands over the point-of-compromise detection library.

mod args;
mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::Parser;
use thiserror::Error;

use args::{Cli, Command};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("no convergence within {iterations} iterations (last l1 residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::NotConverged { .. } => 3,
        }
    }
}

fn run(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Generate(a) => commands::generate(a),
        Command::Inject(a) => commands::inject(a),
        Command::Ingest(a) => commands::ingest(a),
        Command::Detect(a) => commands::detect(a),
        Command::Baseline(a) => commands::baseline(a),
        Command::Eval(a) => commands::eval(a),
        Command::Savings(a) => commands::savings(a),
        Command::Bench(a) => commands::bench(a),
    }
}

fn main() -> ExitCode {
    let argv = match config::expand(std::env::args_os().collect()) {
        Ok(argv) => argv,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code())
        }
    }
}
