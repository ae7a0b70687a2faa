use thiserror::Error;

/// Every failure the library reports.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid matrix data: {0}")]
    InvalidData(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("{op} needs a square matrix, got {rows}x{cols}")]
    NotSquare {
        op: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("{op} needs at least as many rows as columns, got {rows}x{cols}")]
    TooFewRows {
        op: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("rank-deficient column {column} (residual norm {norm:e})")]
    RankDeficient { column: usize, norm: f64 },

    #[error("non-finite gradient at step {step}")]
    NonFiniteGradient { step: u64 },

    #[error("polar chart is degenerate at radius {radius:e}")]
    DegeneratePolar { radius: f64 },

    #[error("landscape has no closed-form Hessian")]
    UnsupportedMetric,

    #[error("run `{which}` never reached the loss threshold")]
    ThresholdNotReached { which: &'static str },

    #[error("invalid config: {key}: {reason}")]
    Config { key: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
