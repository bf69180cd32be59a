use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Library error type.
///
/// The split between variants matters to the CLI: data ingestion and I/O
/// problems exit with a different status code than validation failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The problem instance is degenerate (flat objective, collinear data,
    /// empty support, ...) and has no unique answer.
    #[error("degenerate problem: {0}")]
    Degenerate(String),

    /// A schedule/distribution pairing that the closed-form expectation path
    /// cannot evaluate; the Monte Carlo path in `oracle` still can.
    #[error("not closed-form evaluable: {0}")]
    NotClosedForm(String),

    /// Malformed input data; `line` is the 1-based line in the source file.
    #[error("{path}: line {line}: {message}")]
    Ingest {
        path: String,
        line: u64,
        message: String,
    },

    /// Underlying file-system failure.
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by unreadable or malformed input files, as
    /// opposed to semantically invalid parameters.
    pub fn is_data_error(&self) -> bool {
        matches!(self, Error::Ingest { .. } | Error::Io { .. })
    }
}
