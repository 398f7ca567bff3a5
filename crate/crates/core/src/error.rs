//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid configuration or inputs that violate a documented precondition.
    #[error("configuration error: {0}")]
    Config(String),

    /// Shapes of matrices or vectors do not line up.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// The ADMM solver or its inner SVD failed numerically.
    #[error("solver error: {0}")]
    Solver(String),

    /// The series is too short to hold out a calibration block.
    #[error("calibration skipped: {0}")]
    CalibrationSkipped(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("metric error: {0}")]
    Metric(String),

    /// Structural problems with an input corpus.
    #[error("ingest error: {0}")]
    Ingest(String),

    /// A cell could not be parsed as a number. Rows and columns are 1-based.
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable tag used in CLI error payloads.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Dimension(_) => "dimension",
            Error::Solver(_) => "solver",
            Error::CalibrationSkipped(_) => "calibration_skipped",
            Error::Calibration(_) => "calibration",
            Error::Metric(_) => "metric",
            Error::Ingest(_) => "ingest",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }

    /// Process exit code: 2 configuration, 3 numerical, 4 input/output.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Dimension(_) => 2,
            Error::Solver(_)
            | Error::CalibrationSkipped(_)
            | Error::Calibration(_)
            | Error::Metric(_) => 3,
            Error::Ingest(_) | Error::Parse { .. } | Error::Io(_) => 4,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io(e.to_string()),
            _ => Error::Ingest(e.to_string()),
        }
    }
}
