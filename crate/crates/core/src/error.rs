use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid body at node {node}: {reason}")]
    InvalidBody { node: usize, reason: String },

    #[error("degenerate body: {0}")]
    DegenerateBody(String),

    #[error("convexity lost at node {node} (t = {t}, min principal radius {min_radius:e})")]
    ConvexityLoss { node: usize, t: f64, min_radius: f64 },

    #[error("input rejected: {0}")]
    RejectedInput(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("solver failed: {0}")]
    SolverFailure(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
