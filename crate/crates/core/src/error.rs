use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the bogwatch library.
#[derive(Debug, Error)]
pub enum Error {
    /// Two inputs that must share dimensions or lengths do not.
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("expected {expected} channel(s), got {actual}")]
    Channel { expected: usize, actual: usize },

    /// A pixel lies outside the image or beyond the maximum zenith angle.
    #[error("pixel ({x:.3}, {y:.3}) is outside the camera field of view")]
    OutOfField { x: f64, y: f64 },

    #[error("direction is not unit length (norm = {norm})")]
    InvalidDirection { norm: f64 },

    #[error("invalid camera parameters: {0}")]
    InvalidCamera(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The sun is below the horizon or outside the camera field.
    #[error("no visible sun in the frame")]
    NoSun,

    #[error("clear-sky model error: {0}")]
    Model(String),

    #[error("training data error: {0}")]
    Data(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("position (easting {easting}, northing {northing}) lies outside the map extent")]
    OutOfExtent { easting: f64, northing: f64 },

    /// MAPE division guard: ground truth is zero at the listed indices.
    #[error("ground truth is zero at indices {0:?}")]
    ZeroTruth(Vec<usize>),

    #[error("ground truth series is constant; explained variance is undefined")]
    ConstantTruth,

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Rows that parsed but violate a record invariant, as `(line, reason)` pairs.
    #[error("{path}: rejected rows {}", format_rows(.rows))]
    InvalidRows {
        path: PathBuf,
        rows: Vec<(usize, String)>,
    },

    #[error("{path}: {message}")]
    Ordering { path: PathBuf, message: String },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn format_rows(rows: &[(usize, String)]) -> String {
    rows.iter()
        .map(|(line, why)| format!("line {line} ({why})"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
