//! Command-line front end: file formats, report writing and the `mkalloc`
//! subcommands.

pub mod args;
pub mod commands;
pub mod error;
pub mod format;
pub mod input;
pub mod model;

use args::{Cli, Command};
pub use error::{CliError, CliResult};

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Fit(a) => commands::fit::run(a),
        Command::Allocate(a) => commands::allocate::run(a),
        Command::Simulate(c) => commands::simulate::run(c),
        Command::Predict(a) => commands::predict::run(a),
    }
}
