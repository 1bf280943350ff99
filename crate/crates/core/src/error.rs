use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("invalid data: {0}")]
    Data(#[from] DataError),
    #[error("invalid model: {0}")]
    Model(#[from] ModelError),
    #[error("{0}")]
    Inference(#[from] InferenceError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

/// Coarse error class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Data,
    Config,
    Model,
    Io,
    Inference,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Data => 3,
            ErrorCategory::Config => 4,
            ErrorCategory::Model => 5,
            ErrorCategory::Io => 6,
            ErrorCategory::Inference => 7,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ErrorCategory::Data => "data",
            ErrorCategory::Config => "config",
            ErrorCategory::Model => "model",
            ErrorCategory::Io => "io",
            ErrorCategory::Inference => "inference",
        }
    }
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) => ErrorCategory::Config,
            Error::Data(_) | Error::Format { .. } => ErrorCategory::Data,
            Error::Model(_) => ErrorCategory::Model,
            Error::Inference(_) => ErrorCategory::Inference,
            Error::Io { .. } => ErrorCategory::Io,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// One rejected configuration setting.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigIssue {
    #[error("component count must be at least 1")]
    NoComponents,
    #[error("max shift must be at least 1")]
    NoShift,
    #[error("grid length {grid_len} is shorter than max_shift - 1 + longest curve = {required}")]
    GridTooShort { grid_len: usize, required: usize },
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("max_iters must be at least 1")]
    NoIterations,
    #[error("dirichlet alpha must be finite and non-negative, got {0}")]
    BadAlpha(f64),
    #[error("variance floor fraction must be finite and non-negative, got {0}")]
    BadFloor(f64),
    #[error("dataset is empty")]
    EmptyData,
    #[error("cross-validation needs at least 2 folds and one curve per fold, got {folds} folds for {curves} curves")]
    BadFolds { folds: usize, curves: usize },
    #[error("{components} components requested but only {curves} curves available")]
    TooFewCurves { components: usize, curves: usize },
}

/// All issues found while validating a configuration against a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub issues: Vec<ConfigIssue>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

impl From<ConfigIssue> for ConfigError {
    fn from(issue: ConfigIssue) -> Self {
        ConfigError {
            issues: vec![issue],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("curve {id:?} has no points")]
    EmptyCurve { id: String },
    #[error("curve {id:?}: point {index} has {found} values, expected {expected}")]
    RaggedPoint {
        id: String,
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("curve {id:?}: non-finite value at point {index}, dimension {dim}")]
    NonFinite {
        id: String,
        index: usize,
        dim: usize,
    },
    #[error("curve {id:?} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("dataset has no curves")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{table} has shape {found}, expected {expected}")]
    Shape {
        table: &'static str,
        expected: String,
        found: String,
    },
    #[error("{table} row {row} sums to {sum}, expected 1")]
    NotNormalized {
        table: &'static str,
        row: usize,
        sum: f64,
    },
    #[error("{table} row {row} has an invalid probability {value}")]
    BadProbability {
        table: &'static str,
        row: usize,
        value: f64,
    },
    #[error("step table row {row} puts mass {value} on a disallowed offset {offset}")]
    DisallowedStep {
        row: usize,
        offset: usize,
        value: f64,
    },
    #[error("non-finite mean at component {component}, position {position}")]
    NonFiniteMean { component: usize, position: usize },
    #[error(
        "variance {value} at component {component}, position {position} is below the floor {floor}"
    )]
    VarianceBelowFloor {
        component: usize,
        position: usize,
        value: f64,
        floor: f64,
    },
    #[error("variance floor must be finite and positive, got {0}")]
    BadFloor(f64),
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error("unsupported schema version {found}, expected {expected}")]
    SchemaVersion { expected: u32, found: u32 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("curve {id:?} has dimension {found}, model expects {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("curve {id:?} of length {len} does not fit the grid: max_shift - 1 + len = {required} > {grid_len}")]
    CurveTooLong {
        id: String,
        len: usize,
        required: usize,
        grid_len: usize,
    },
    #[error("component {component} / start {start} out of range")]
    CutsetOutOfRange { component: usize, start: usize },
    #[error("non-finite input to emission density")]
    NonFinite,
    #[error("enumeration of {paths} paths exceeds the guard of {limit}")]
    TooManyPaths { paths: f64, limit: f64 },
}
