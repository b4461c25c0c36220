use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields are bound to different grids")]
    GridMismatch,

    #[error("invalid bundle spec: {0}")]
    InvalidSpec(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// Some cone factor M_i dropped below the admissibility floor.
    #[error("cone violation: margin {margin:e} below floor {floor:e}")]
    ConeViolation { margin: f64, floor: f64 },

    #[error("no descent: backtracking reached step {step:e} at residual {residual:e}")]
    NoDescent { step: f64, residual: f64 },

    #[error("newton did not converge in {iters} iterations (residual {residual:e})")]
    MaxIters { iters: usize, residual: f64 },

    /// The s-continuity inside the U operator could not reach s = 1.
    #[error("continuation path stalled at s = {s} (step {ds:e})")]
    PathStall { s: f64, ds: f64 },

    #[error("diagnostics failed: {0}")]
    Diagnostics(String),

    #[error("linear solver did not converge: {0}")]
    LinearSolve(String),

    #[error("l_inverse requires a positive target, got {0}")]
    NonPositiveTarget(f64),

    #[error(transparent)]
    Config(#[from] crate::cli::config::ConfigError),

    #[error(transparent)]
    Snapshot(#[from] crate::cli::snapshot::SnapshotError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
