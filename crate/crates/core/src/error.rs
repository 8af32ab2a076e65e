use std::path::PathBuf;

use ndgrad::GradError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LiftError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("region index {index} out of range 1..={count}")]
    Index { index: usize, count: usize },

    #[error("coordinate {value} on axis {axis} lies outside [0, 1]")]
    Domain { axis: usize, value: f64 },

    #[error("point {point:?} is not inside region {region:?}")]
    Consistency { point: Vec<f64>, region: Vec<usize> },

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("cannot parse {path}: {msg} (byte offset {offset})")]
    Parse {
        path: String,
        offset: u64,
        msg: String,
    },

    #[error("input file not found: {}", .0.display())]
    MissingInput(PathBuf),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("architecture mismatch: checkpoint {expected}, found {found}")]
    Fingerprint { expected: String, found: String },

    #[error(transparent)]
    Grad(#[from] GradError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LiftError {
    /// Process exit code for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            LiftError::Config(_) | LiftError::MissingInput(_) | LiftError::Fingerprint { .. } => 2,
            _ => 3,
        }
    }

    pub(crate) fn parse(path: impl Into<String>, offset: u64, msg: impl Into<String>) -> Self {
        LiftError::Parse {
            path: path.into(),
            offset,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, LiftError>;
