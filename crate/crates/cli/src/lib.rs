//! `causal-audit` command-line driver.
//!
//! Each subcommand writes to `<out>/<run-id>/`, where the run id is a hash of
//! the persisted `run_config.json`. Exit codes: 0 success, 1 analysis
//! failure, 2 usage or configuration error.

pub mod args;
pub mod commands;
pub mod output;
pub mod report;
pub mod svg;

use std::path::Path;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

pub const THREADS_ENV: &str = "CAUSAL_AUDIT_THREADS";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Analysis(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Analysis(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Analysis(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Analysis(m) => f.write_str(m),
        }
    }
}

impl From<causal_audit::Error> for CliError {
    fn from(e: causal_audit::Error) -> Self {
        match e {
            causal_audit::Error::Config { .. } => CliError::Usage(e.to_string()),
            other => CliError::Analysis(other.to_string()),
        }
    }
}

fn with_config<T>(flags: &T, common: &args::CommonOpt, command: &str) -> Result<T, CliError>
where
    T: serde::Serialize + serde::de::DeserializeOwned + Clone + HasCommon,
{
    let Some(path) = &common.config else {
        return Ok(flags.clone());
    };
    let mut merged: T = args::merge_config(flags, path, command)?;
    *merged.common_mut() = common.clone();
    Ok(merged)
}

#[doc(hidden)]
pub trait HasCommon {
    fn common_mut(&mut self) -> &mut args::CommonOpt;
}

macro_rules! has_common {
    ($($t:ty),*) => {$(
        impl HasCommon for $t {
            fn common_mut(&mut self) -> &mut args::CommonOpt {
                &mut self.common
            }
        }
    )*};
}
has_common!(args::GenerateArgs, args::AuditArgs, args::TrainArgs, args::SweepArgs, args::AblateArgs);

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
    // a second initialization in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Runs a parsed command line.
pub fn execute(cli: Cli) -> Result<commands::Outcome, CliError> {
    configure_threads()?;
    let name = cli.command.name();
    match &cli.command {
        Command::Generate(a) => commands::generate(&with_config(a, &a.common, name)?),
        Command::Audit(a) => commands::audit(&with_config(a, &a.common, name)?),
        Command::Train(a) => commands::train(&with_config(a, &a.common, name)?),
        Command::Sweep(a) => commands::sweep(&with_config(a, &a.common, name)?),
        Command::Ablate(a) => commands::ablate(&with_config(a, &a.common, name)?),
        Command::Report(a) => commands::report(&a.run_dir),
    }
}

/// Entry point for the binary: parses `std::env::args`, prints the run
/// directory on success and the error otherwise.
pub fn main_exit() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(outcome) => {
            println!("{}", outcome.run_dir.display());
            ExitCode::from(outcome.exit_code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
