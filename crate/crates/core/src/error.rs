use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, FlowError>;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("component mismatch: {0}")]
    ComponentMismatch(String),
    #[error("axis {axis} out of range for a {dim}-dimensional grid")]
    InvalidAxis { axis: usize, dim: usize },
    #[error("derivative order must be at least 1")]
    InvalidOrder,
    #[error("block index {j} outside [{j_min}, {j_max}]")]
    BlockOutOfRange { j: i32, j_min: i32, j_max: i32 },
    #[error("dyadic block {0} carries no energy")]
    ZeroBlock(i32),
    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),
    #[error("exponent precondition violated: {0}")]
    ExponentPrecondition(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("CFL violation: dt = {dt:.3e} exceeds limit, suggested dt = {suggested:.3e}")]
    Cfl { dt: f64, suggested: f64 },
    #[error("vacuum: min density {min_density:.3e} is not positive")]
    Vacuum { min_density: f64 },
    #[error("negative localized energy: {0:.3e}")]
    NegativeEnergy(f64),
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("time grid mismatch: {0}")]
    TimeGridMismatch(String),
    #[error("degenerate data for rate fit: {0}")]
    DegenerateFit(String),
    #[error("unreachable target norm: {0}")]
    UnreachableNorm(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
