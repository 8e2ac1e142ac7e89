use std::path::PathBuf;

/// Errors produced by the corpus pipeline, training, prediction and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what} file {path}: {message}")]
    Format {
        what: &'static str,
        path: PathBuf,
        message: String,
    },

    #[error("unsupported {what} file version {found} (expected {expected})")]
    Version {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error("no author satisfies the split constraints (min_train={min_train}, min_test={min_test})")]
    NoAuthorSurvives { min_train: usize, min_test: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("infeasible planted aspect levels: {0}")]
    InfeasiblePlant(String),

    #[error("inconsistent model state: {0}")]
    InconsistentState(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(
        what: &'static str,
        path: impl Into<PathBuf>,
        message: impl Into<String>,
    ) -> Self {
        Error::Format {
            what,
            path: path.into(),
            message: message.into(),
        }
    }
}
