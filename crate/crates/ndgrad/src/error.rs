use thiserror::Error;

#[derive(Debug, Error)]
pub enum GradError {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("expected a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("data length {len} does not match shape {shape:?}")]
    Length { len: usize, shape: Vec<usize> },

    #[error("unsupported upsample ratio: {from:?} -> {to:?}")]
    UpsampleRatio { from: Vec<usize>, to: Vec<usize> },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("malformed tensor stream at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GradError>;
