use std::path::PathBuf;

/// Errors raised anywhere in the reduction, prediction and decoding pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{what}: malformed document at line {line}, column {column}: {message}")]
    Syntax {
        what: &'static str,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("template error in {pattern:?}: {message}")]
    Template { pattern: String, message: String },

    #[error("record {index}: {message}")]
    Record { index: usize, message: String },

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("squad document: {0}")]
    Squad(String),

    #[error("predictions: {0}")]
    Predictions(String),

    #[error("qid collision: {0:?} appears in both datasets")]
    QidCollision(String),

    #[error("missing provenance for qid {0:?}")]
    MissingProvenance(String),

    #[error("missing prediction for qid {0:?}")]
    MissingPrediction(String),

    #[error("incomplete coverage: {} qid(s) without prediction: {}", .0.len(), .0.join(", "))]
    IncompleteCoverage(Vec<String>),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("endpoint {endpoint}: {message}")]
    Connection { endpoint: String, message: String },

    #[error("evaluation: {0}")]
    Evaluation(String),

    #[error("calibration: {0}")]
    Calibration(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn syntax(what: &'static str, err: serde_json::Error) -> Self {
        Error::Syntax {
            what,
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}
