use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CdlError>;

/// Coarse classification used by the command-line driver to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Internal,
}

#[derive(Debug, Error)]
pub enum CdlError {
    #[error("dimension mismatch between {left} ({left_shape}) and {right} ({right_shape})")]
    DimensionMismatch {
        left: &'static str,
        left_shape: String,
        right: &'static str,
        right_shape: String,
    },

    #[error("singular system in {context}; use ridge_eps > 0 to regularize")]
    SingularSystem { context: &'static str },

    #[error("column {column} of the label indicator is not one-hot")]
    NotOneHot { column: usize },

    #[error("all dictionary target weights are zero")]
    AllWeightsZero,

    #[error("invalid hyperparameter {name}: {reason}")]
    InvalidHyperparam { name: &'static str, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("class {class} has no samples")]
    EmptyClass { class: String },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    #[error("loss increased at iteration {iteration}, step {step}: {before} -> {after}")]
    NonMonotone {
        iteration: usize,
        step: usize,
        before: f64,
        after: f64,
    },

    #[error("similarity matrices disagree on {0}")]
    RegistryMismatch(String),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: unknown label `{label}` at line {line}")]
    UnknownLabel {
        path: PathBuf,
        label: String,
        line: usize,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl CdlError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            CdlError::InvalidHyperparam { .. } | CdlError::InvalidArgument(_) => ErrorKind::Config,
            CdlError::NonMonotone { .. } | CdlError::RegistryMismatch(_) => ErrorKind::Internal,
            CdlError::DimensionMismatch { .. }
            | CdlError::SingularSystem { .. }
            | CdlError::NotOneHot { .. }
            | CdlError::AllWeightsZero
            | CdlError::EmptyClass { .. }
            | CdlError::LabelOutOfRange { .. }
            | CdlError::NonFinite { .. }
            | CdlError::Format { .. }
            | CdlError::UnknownLabel { .. }
            | CdlError::InvalidDataset(_)
            | CdlError::Io { .. }
            | CdlError::Json { .. } => ErrorKind::Data,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CdlError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CdlError::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub(crate) fn shape(m: &crate::Matrix) -> String {
    format!("{}x{}", m.nrows(), m.ncols())
}

pub(crate) fn mismatch(
    left: &'static str,
    l: &crate::Matrix,
    right: &'static str,
    r: &crate::Matrix,
) -> CdlError {
    CdlError::DimensionMismatch {
        left,
        left_shape: shape(l),
        right,
        right_shape: shape(r),
    }
}
