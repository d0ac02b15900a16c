use cpcp::CpError;
use thiserror::Error;

/// Exit code for a successful run or a converged solve.
pub const EXIT_OK: i32 = 0;
pub const EXIT_STALLED: i32 = 2;
pub const EXIT_MAX_ITERS: i32 = 3;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}: line {line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] CpError),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            // Bad configuration values reach the core as typed errors.
            CliError::Core(CpError::InvalidConfig(_)) => EXIT_USAGE,
            _ => EXIT_DATA,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
