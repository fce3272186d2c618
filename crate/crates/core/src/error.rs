use thiserror::Error;

pub type Result<T> = std::result::Result<T, FiberError>;

#[derive(Debug, Error)]
pub enum FiberError {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate triangle {index} (signed area {area:e})")]
    DegenerateTriangle { index: usize, area: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite at pivot {pivot} (value {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:e})")]
    LinearSolve { iterations: usize, residual: f64 },

    #[error(
        "eigensolver did not converge after {sweeps} sweeps (worst relative residual {residual:e})"
    )]
    EigenNotConverged { sweeps: usize, residual: f64 },

    #[error("fiber continuation stalled at t = {t} (step {step:e}, residual {residual:e})")]
    ContinuationStalled { t: f64, step: f64, residual: f64 },

    #[error("corrector failed at height {height:?}: {source}")]
    Corrector {
        height: Vec<f64>,
        #[source]
        source: Box<FiberError>,
    },

    #[error("unresolved bracket [{lo}, {hi}] after {steps} secant steps")]
    UnresolvedBracket { lo: f64, hi: f64, steps: usize },

    #[error("line search failed at v = {v:?} (mismatch {mismatch:e})")]
    LineSearch { v: Vec<f64>, mismatch: f64 },

    #[error("finite-difference Jacobian is ill-conditioned (reciprocal condition {rcond:e})")]
    IllConditioned { rcond: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl FiberError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        FiberError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for failures of an iterative method (as opposed to bad input or I/O).
    pub fn is_convergence(&self) -> bool {
        matches!(
            self,
            FiberError::LinearSolve { .. }
                | FiberError::EigenNotConverged { .. }
                | FiberError::ContinuationStalled { .. }
                | FiberError::Corrector { .. }
                | FiberError::UnresolvedBracket { .. }
                | FiberError::LineSearch { .. }
                | FiberError::IllConditioned { .. }
                | FiberError::NotPositiveDefinite { .. }
        )
    }
}
