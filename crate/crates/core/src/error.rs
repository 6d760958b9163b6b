use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },

    #[error("degenerate feature: zero-norm vector at sample {sample}")]
    DegenerateFeature { sample: usize },

    #[error("index {index} out of range ({len} available) for {what}")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training failed at step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<LabError>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl LabError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        LabError::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// True for failures of the numeric kind (degenerate features, NaNs,
    /// non-convergence), including ones wrapped with a step index.
    pub fn is_numeric(&self) -> bool {
        match self {
            LabError::Numeric(_) | LabError::DegenerateFeature { .. } => true,
            LabError::AtStep { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;
