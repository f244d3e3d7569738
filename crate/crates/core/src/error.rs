use std::path::PathBuf;

use thiserror::Error;

/// Broad failure class, used to pick CLI exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numeric => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::Config => "config",
            ErrorKind::Data => "data",
            ErrorKind::Numeric => "numeric",
        }
    }
}

#[derive(Debug, Error)]
pub enum GesdError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("column `{column}` not found in header")]
    MissingColumn { column: String },

    #[error("column `{column}` is not declared in the schema")]
    UndeclaredColumn { column: String },

    #[error("non-binary label `{value}` at row {row}")]
    NonBinaryLabel { row: usize, value: String },

    #[error("group column `{column}` has a single distinct value; at least two groups are required")]
    SingleGroup { column: String },

    #[error("unparseable cell `{value}` at row {row}, column `{column}`")]
    UnparseableCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("split would leave group {group} empty in the training partition")]
    EmptyGroupInTrain { group: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("training diverged (non-finite loss) at learning rate {learning_rate}")]
    Diverged { learning_rate: f64 },

    #[error("singular least-squares system ({0})")]
    SingularSystem(String),

    #[error("degenerate LIME sample spread: {0}")]
    DegenerateSpread(String),

    #[error("group {group} has no sampled instances; increase the sample size or use stratified sampling")]
    EmptyGroupInSample { group: usize },

    #[error("GESD needs at least two groups, got {0}")]
    TooFewGroups(usize),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("explanation failed at perturbation {index}: {source}")]
    Perturbation {
        index: usize,
        #[source]
        source: Box<GesdError>,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl GesdError {
    pub fn kind(&self) -> ErrorKind {
        use GesdError::*;
        match self {
            InvalidConfig(_) | Toml(_) | TooFewGroups(_) => ErrorKind::Config,
            Io { .. }
            | Csv { .. }
            | MissingColumn { .. }
            | UndeclaredColumn { .. }
            | NonBinaryLabel { .. }
            | SingleGroup { .. }
            | UnparseableCell { .. }
            | InvalidDataset(_)
            | EmptyGroupInTrain { .. }
            | DimensionMismatch { .. }
            | EmptyGroupInSample { .. }
            | UndefinedMetric(_)
            | Json(_) => ErrorKind::Data,
            Diverged { .. } | SingularSystem(_) | DegenerateSpread(_) => ErrorKind::Numeric,
            Perturbation { source, .. } => source.kind(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GesdError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = GesdError> = std::result::Result<T, E>;
