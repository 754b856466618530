//! Command-line front end for `bfgrad`: the function-spec language, experiment
//! configuration, and the subcommands that emit CSV and text artifacts.

mod app;
pub mod commands;
pub mod config;
pub mod error;
pub mod function_spec;

use std::path::Path;

pub use app::run_args;
pub use config::{ExperimentConfig, Overrides, Resolved};
pub use error::CliError;
pub use function_spec::{parse_function, FunctionSpec, ParseError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Transform,
    Gradcheck,
    Bench,
    Hyper,
    Train,
    Selftest,
}

pub fn execute(cmd: Command, r: &Resolved) -> Result<commands::Output, CliError> {
    match cmd {
        Command::Transform => commands::transform_cmd(r),
        Command::Gradcheck => commands::gradcheck_cmd(r),
        Command::Bench => commands::bench_cmd(r),
        Command::Hyper => commands::hyper_cmd(r),
        Command::Train => commands::train_cmd(r),
        Command::Selftest => commands::selftest_cmd(r),
    }
}

/// Writes every artifact into `dir`, or the first one to `stdout` when there is no directory.
pub fn write_output(out: &commands::Output, dir: Option<&Path>, stdout: &mut dyn std::io::Write) -> Result<(), CliError> {
    match dir {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            for (name, contents) in &out.files {
                std::fs::write(d.join(name), contents)?;
            }
        }
        None => {
            if let Some((_, contents)) = out.files.first() {
                stdout.write_all(contents.as_bytes())?;
            }
        }
    }
    Ok(())
}
