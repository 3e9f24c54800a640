//! Command-line front end for `kcycle`: loads a scenario file and runs one
//! of `stasis`, `weights`, `cycle`, `sweep` or `verify`.
//!
//! Exit codes: 0 success, 1 solver failure (or a failed verification),
//! 2 stasis found but not regular, 64 usage, scenario or file errors.

pub mod commands;
pub mod output;
pub mod scenario;

use std::ffi::OsString;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use kcycle::dsl::ParseError;
use kcycle::{CycleError, StasisError};
use thiserror::Error;

use crate::commands::Context;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_NON_REGULAR: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

/// Environment variable overriding the seed of random-linear scenarios.
pub const SEED_VAR: &str = "KCYCLE_SEED";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("field {index}: {source}")]
    Field { index: usize, source: ParseError },
    #[error("invalid cycle record: {0}")]
    Record(String),
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: io::Error },
    #[error("cannot write to stdout: {0}")]
    Stdout(io::Error),
    #[error(transparent)]
    Stasis(#[from] StasisError),
    #[error(transparent)]
    Cycle(#[from] CycleError),
    #[error("{0}")]
    NonRegular(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_)
            | Self::Io { .. }
            | Self::Json { .. }
            | Self::Scenario(_)
            | Self::Field { .. }
            | Self::Record(_) => EXIT_USAGE,
            Self::Output { .. }
            | Self::Stdout(_)
            | Self::Stasis(_)
            | Self::Cycle(_)
            | Self::NonRegular(_) => EXIT_FAILURE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "kcycle",
    version,
    about = "Stasis points and cycles of switched vector fields"
)]
struct Cli {
    /// Scenario file (JSON)
    #[arg(long, global = true, value_name = "PATH")]
    scenario: Option<PathBuf>,
    /// Directory for result files
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Override the command's solver tolerance
    #[arg(long, global = true, value_name = "F", allow_negative_numbers = true)]
    tol: Option<f64>,
    /// Print results as JSON
    #[arg(long, global = true)]
    json: bool,
    /// Progress and solver details on stderr
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Find the stasis point (or its weights) and check regularity
    Stasis,
    /// Solve for weights at the scenario's stasis_point
    Weights,
    /// Solve one cycle at total time DELTA and write a record
    Cycle {
        #[arg(long, allow_negative_numbers = true)]
        delta: f64,
    },
    /// Continue the cycle branch up the scenario's delta ladder
    Sweep,
    /// Re-check the closure of a cycle record
    Verify { file: PathBuf },
}

fn seed_override() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_VAR) {
        Ok(s) => s.trim().parse().map(Some).map_err(|_| {
            CliError::Usage(format!(
                "{SEED_VAR} must be a non-negative integer, got {s:?}"
            ))
        }),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::Usage(format!("{SEED_VAR}: {e}"))),
    }
}

fn dispatch(cli: Cli, ctx: &mut Context) -> Result<i32, CliError> {
    if let Some(t) = cli.tol {
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::Usage(format!("--tol must be positive, got {t}")));
        }
    }
    if let Command::Cycle { delta } = cli.command {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(CliError::Usage(format!(
                "--delta must be positive and finite, got {delta}"
            )));
        }
    }
    if let Command::Verify { file } = &cli.command {
        return commands::verify(file, ctx);
    }

    let path = cli
        .scenario
        .ok_or_else(|| CliError::Usage("--scenario is required for this command".into()))?;
    let problem = scenario::resolve(scenario::load(&path)?, seed_override()?)?;
    match cli.command {
        Command::Stasis => commands::stasis(&problem, ctx, false),
        Command::Weights => commands::stasis(&problem, ctx, true),
        Command::Cycle { delta } => commands::cycle(&problem, delta, ctx),
        Command::Sweep => commands::sweep(&problem, ctx),
        Command::Verify { .. } => unreachable!("handled above"),
    }
}

/// Runs one command line and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let mut ctx = Context {
        out_dir: cli.out.clone(),
        tol: cli.tol,
        json: cli.json,
        verbose: cli.verbose,
        stdout,
        stderr,
    };
    match dispatch(cli, &mut ctx) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(ctx.stderr, "error: {e}");
            e.exit_code()
        }
    }
}
