use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("angle {tau} is outside [0, pi/2]")]
    AngleOutOfRange { tau: f64 },

    #[error("eigenvalue {eigenvalue} is outside the positive cone")]
    ConeViolation { eigenvalue: f64 },

    #[error("value {value} is outside the envelope range [{low}, {high}]")]
    OutOfRange { value: f64, low: f64, high: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("discrete convexity lost at node {node} (eigenvalue {eigenvalue:e}, step {step})")]
    ConvexityLoss { node: usize, eigenvalue: f64, step: usize },

    #[error("boundary solve did not converge at node {node}: residual {residual:e} after {iterations} iterations")]
    BoundaryNonConvergence {
        node: usize,
        residual: f64,
        iterations: usize,
    },

    #[error("initial data rejected: {0}")]
    InitialData(String),

    #[error("fields live on different grids ({left} vs {right} nodes)")]
    GridMismatch { left: usize, right: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
