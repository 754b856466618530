//! Argument parsing and the process entry point.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{parse_p_list, resolve, Overrides};
use crate::{execute, write_output, CliError, Command};

/// p-biased Fourier analysis and gradient-estimator experiments.
///
/// Flags override values from --config, which override built-in defaults.
/// Exit codes: 0 success, 2 configuration error, 3 numeric failure.
#[derive(Parser, Debug)]
#[command(name = "bfgrad", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// JSON config, or any file this tool emitted (its `# config:` header is read).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; the primary artifact goes to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true)]
    rho: Option<f64>,
    #[arg(long, global = true)]
    estimator: Option<String>,
    /// Function spec; repeat for several functions.
    #[arg(long = "function", global = true)]
    functions: Vec<String>,
    /// Comma-separated probabilities of +1, one per coordinate.
    #[arg(long, global = true)]
    p: Option<String>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Sub {
    /// Fourier expansion of each function in text form.
    Transform,
    /// Exact gradient against central finite differences per coordinate.
    Gradcheck,
    /// Variance benchmark CSV for each function and estimator.
    Bench,
    /// Hypercontractivity bound report.
    Hyper,
    /// Train the sigmoid belief network and emit metrics.
    Train,
    /// Seeded oracle and property checks.
    Selftest,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let overrides = Overrides {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        trials: cli.trials,
        rho: cli.rho,
        estimator: cli.estimator,
        functions: cli.functions,
        p: cli.p.as_deref().map(parse_p_list).transpose()?,
    };
    let resolved = resolve(&overrides)?;
    let cmd = match cli.command {
        Sub::Transform => Command::Transform,
        Sub::Gradcheck => Command::Gradcheck,
        Sub::Bench => Command::Bench,
        Sub::Hyper => Command::Hyper,
        Sub::Train => Command::Train,
        Sub::Selftest => Command::Selftest,
    };
    let output = execute(cmd, &resolved)?;
    write_output(&output, resolved.config.out.as_deref(), &mut std::io::stdout().lock())?;
    match output.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Parses `args` (program name first), runs the command, and returns the exit code.
pub fn run_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("bfgrad: {e}");
            e.exit_code() as u8
        }
    }
}
