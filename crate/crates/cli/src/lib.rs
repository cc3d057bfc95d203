//! Command-line pipeline: extract → evaluate / agree / ensemble → report.

pub mod args;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod output;

use std::ffi::OsString;

use clap::Parser;

pub use args::Cli;
pub use error::{CliError, EXIT_DATA, EXIT_OK, EXIT_TRANSPORT, EXIT_USAGE};

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        args::Command::Extract(a) => commands::extract(a),
        args::Command::Evaluate(a) => commands::evaluate(a),
        args::Command::Ensemble(a) => commands::ensemble(a),
        args::Command::Agree(a) => commands::agree(a),
        args::Command::Report(a) => commands::report(a),
    }
}

/// Parses `args` (including the program name) and runs the command;
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
