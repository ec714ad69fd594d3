use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = NmfError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum NmfError {
    /// Two operands disagree along a named axis.
    #[error("dimension mismatch in {context}: {axis} is {found}, expected {expected}")]
    DimensionMismatch {
        context: &'static str,
        axis: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("non-finite entry {value} at ({row}, {col})")]
    NonFinite { row: usize, col: usize, value: f64 },

    #[error("matrix must have at least one row and one column (got {rows}x{cols})")]
    EmptyMatrix { rows: usize, cols: usize },

    #[error("entry count {len} does not match shape {rows}x{cols}")]
    ShapeLength { rows: usize, cols: usize, len: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("sample index {index} out of range for {count} samples")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("normalization of an all-zero matrix")]
    AllZero,

    #[error("{path}:{line}:{col}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        col: usize,
        msg: String,
    },

    #[error("no images found in {0}")]
    EmptyDirectory(PathBuf),

    #[error("non-finite cost at epoch {epoch}")]
    NumericFailure { epoch: usize },

    #[error("trace invariant violated: {0}")]
    TraceInvariant(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl NmfError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        NmfError::InvalidConfig(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NmfError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Fail with [`NmfError::DimensionMismatch`] unless `found == expected`.
pub(crate) fn check_dim(
    context: &'static str,
    axis: &'static str,
    expected: usize,
    found: usize,
) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(NmfError::DimensionMismatch {
            context,
            axis,
            expected,
            found,
        })
    }
}
