use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),

    #[error("invalid coupling: {0}")]
    InvalidCoupling(String),

    #[error("cost matrix must be square, got {rows}x{cols}")]
    NonSquareCost { rows: usize, cols: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("unsupported marginals: {0}")]
    UnsupportedMarginals(String),

    #[error("{what}: size {n} exceeds guard {max}")]
    SizeGuard {
        what: &'static str,
        n: usize,
        max: usize,
    },

    #[error("{what} is singular: eigenvalue {eigenvalue:e} below threshold {threshold:e}")]
    SingularMatrix {
        what: &'static str,
        eigenvalue: f64,
        threshold: f64,
    },

    #[error(
        "Gromov-Monge map does not exist: dual variable has minimum singular value \
         {min_singular_value:e}, violating the nonsingularity hypothesis"
    )]
    MapDoesNotExist { min_singular_value: f64 },

    #[error("covariance degenerate along flow: lambda_min = {lambda_min:e}")]
    FlowDegenerate { lambda_min: f64 },

    #[error("non-finite state encountered in {context}")]
    NonFiniteState { context: String },

    #[error("inner solver diverged: objective increased for {stalled_replans} consecutive replans")]
    InnerDivergence {
        stalled_replans: usize,
        last_iterate: Box<crate::cloud::PointCloud>,
    },

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("trajectory frame {frame} is missing a velocity field")]
    MissingVelocity { frame: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
