//! Command-line front end: argument parsing, config resolution, run
//! manifests and exit-code mapping. Each subcommand wraps one library
//! operation.

pub mod args;
pub mod commands;
pub mod manifest;
pub mod settings;

use std::ffi::OsString;
use std::fmt;

use clap::Parser;
use probe_core::{ErrorKind, ProbeError};

pub use args::Cli;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USER: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable config, inconsistent options.
    Usage(String),
    Probe(ProbeError),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Probe(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ProbeError> for CliError {
    fn from(e: ProbeError) -> Self {
        CliError::Probe(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USER,
            CliError::Probe(e) => match e.kind() {
                ErrorKind::User => EXIT_USER,
                ErrorKind::Data => EXIT_DATA,
                ErrorKind::Numerical => EXIT_NUMERICAL,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parse `argv` (including the program name) and run; returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USER } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    if cli.threads == 0 {
        return Err(usage("--threads must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| usage(format!("cannot start thread pool: {e}")))?;
    pool.install(|| commands::dispatch(cli))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_kinds_map_to_exit_codes() {
        assert_eq!(usage("x").exit_code(), EXIT_USER);
        assert_eq!(CliError::from(ProbeError::Config("x".into())).exit_code(), EXIT_USER);
        assert_eq!(CliError::from(ProbeError::Data("x".into())).exit_code(), EXIT_DATA);
        let fmt = ProbeError::Format {
            offset: 3,
            message: "x".into(),
        };
        assert_eq!(CliError::from(fmt).exit_code(), EXIT_DATA);
        assert_eq!(CliError::from(ProbeError::Divergence("x".into())).exit_code(), EXIT_NUMERICAL);
    }

    #[test]
    fn zero_threads_rejected() {
        assert_eq!(run(["probe", "--threads", "0", "dataset", "inspect", "x"]), EXIT_USER);
    }
}
