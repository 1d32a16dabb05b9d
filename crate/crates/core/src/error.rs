use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("degenerate density {density:e} (floor {floor:e}): mean velocity and temperature undefined")]
    DegenerateDensity { density: f64, floor: f64 },

    #[error("invalid moments: {0}")]
    InvalidMoments(String),

    #[error("negative value {value:e} at node {index} (tolerance {tol:e})")]
    NegativeValue { index: usize, value: f64, tol: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("nodes do not lie on an integer lattice: {0}")]
    NonLatticeGrid(String),

    #[error("unsupported velocity dimension {0}")]
    UnsupportedDimension(usize),

    #[error("requested rank {requested} exceeds table size {max}")]
    RankExceedsTable { requested: usize, max: usize },

    #[error("resource guard: {0} (pass --force to override)")]
    ResourceGuard(String),

    #[error("CFL violation: dt * max|v| / dx = {cfl:.4} > {limit}")]
    CflViolation { cfl: f64, limit: f64 },

    #[error("loss of positivity in cell {cell}: {what} = {value:e}")]
    PositivityLoss { cell: usize, what: &'static str, value: f64 },

    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("{context}: {source}")]
    Io {
        context: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { field, reason: reason.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { context: path.into(), source }
    }
}
