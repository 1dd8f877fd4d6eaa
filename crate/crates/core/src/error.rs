//! Crate-wide error type and exit-code mapping.

use thiserror::Error;

/// Everything that can go wrong in the library or the CLI.
///
/// Errors split into two families: configuration/validation problems
/// (rejected inputs, bad config files) and runtime failures (solver
/// breakdown, I/O). The CLI maps the former to exit code 2 and the
/// latter to exit code 1.
#[derive(Debug, Error)]
pub enum Error {
    /// A problem-parameter invariant was violated.
    #[error("invalid parameters: {0}")]
    Params(String),

    /// Grid construction rejected its inputs.
    #[error("invalid grid: {0}")]
    Grid(String),

    /// A norm was requested with an inadmissible index.
    #[error("invalid norm index: {0}")]
    Norm(String),

    /// An operation received arguments outside its contract.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Config file parse or validation error, with file:line context.
    #[error("{path}:{line}: {message}")]
    Config {
        path: String,
        line: usize,
        message: String,
    },

    /// A CLI-level configuration problem not tied to a file line.
    #[error("configuration error: {0}")]
    CliConfig(String),

    /// The implicit linear solve missed its residual contract.
    #[error("linear solve failure: {0}")]
    Solve(String),

    /// A search or iteration could not produce a usable result.
    #[error("runtime failure: {0}")]
    Runtime(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit code the CLI should use for this error: 2 for configuration
    /// and validation problems, 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Params(_)
            | Error::Grid(_)
            | Error::Norm(_)
            | Error::InvalidArgument(_)
            | Error::Config { .. }
            | Error::CliConfig(_) => 2,
            Error::Solve(_) | Error::Runtime(_) | Error::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
