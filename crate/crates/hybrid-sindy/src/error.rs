use thiserror::Error;

/// Crate-wide error type.
///
/// The variants map onto the CLI exit-code contract: `Config` exits with 2,
/// everything else with 3.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or arguments (bad field, missing key, bad shape).
    #[error("config error: {0}")]
    Config(String),

    /// Numerical failure at runtime (divergence, non-finite data, degenerate input).
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Stable exit code for the CLI: 0 success, 2 config error, 3 runtime failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Numerical(_) | Error::Io(_) => 3,
        }
    }
}
