use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("measure is empty")]
    EmptyMeasure,

    #[error("step size {eta} is outside the admissible range (0, {max})")]
    StepSizeOutOfRange { eta: f64, max: f64 },

    #[error("assignment solver needs equal point counts in dimension {dim}, got {left} and {right}")]
    UnequalCounts { dim: usize, left: usize, right: usize },

    #[error("quadrature grid half-width {half_width} does not cover the smoothing radius {radius}")]
    GridDoesNotCover { half_width: f64, radius: f64 },

    #[error("grid resolution too coarse: {0}")]
    ResolutionTooCoarse(String),

    #[error("the two measures live on different grids")]
    GridMismatch,

    #[error("spectral gap did not converge under grid refinement: coarse {coarse}, fine {fine}")]
    NotConverged { coarse: f64, fine: f64 },

    #[error("eigen-solve failed: {0}")]
    EigenSolve(String),

    #[error("point is not a stationary point: gradient norm {0:e}")]
    NotStationary(f64),

    #[error("dimension {0} is not supported here")]
    UnsupportedDimension(usize),

    #[error("log moment generating function is infinite for every probed lambda")]
    MgfInfinite,

    #[error("precondition not met: {0}")]
    Precondition(String),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and positive, got {value}")))
    }
}
