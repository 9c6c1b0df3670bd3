//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema error: {0}")]
    Schema(String),

    /// SQL / workload / config text that failed to parse. `pos` is a byte
    /// offset into the offending input.
    #[error("parse error at byte {pos}: {msg}")]
    Parse { msg: String, pos: usize },

    #[error("unknown {kind} '{name}'")]
    Lookup { kind: &'static str, name: String },

    /// A malformed data row, reported with its 1-based line number.
    #[error("bad row at line {line}: {msg}")]
    Row { line: usize, msg: String },

    /// An attribute access could not be served by the requested storage
    /// format; the caller must use the other path or the hybrid executor.
    #[error("routing error: {0}")]
    Routing(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("execution error: {0}")]
    Execution(String),

    #[error("monitor error: {0}")]
    Monitor(String),

    #[error("scheduling timeout: {0}")]
    Timeout(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code for the CLI: 2 missing input, 3 schema/parse,
    /// 4 routing/config, 5 timeout, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
            Error::Schema(_) | Error::Parse { .. } | Error::Row { .. } => 3,
            Error::Routing(_) | Error::Config(_) | Error::Lookup { .. } => 4,
            Error::Timeout(_) => 5,
            _ => 1,
        }
    }
}
