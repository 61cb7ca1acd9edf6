use thiserror::Error;

/// Errors surfaced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("chart domain error: {0}")]
    ChartDomain(String),
    #[error("grid error: {0}")]
    Grid(String),
    #[error("non-finite value at node {node} ({context})")]
    NonFinite { node: usize, context: String },
    #[error("linear solve failed: {0}")]
    LinearSolve(String),
    #[error("Newton diverged: {0}")]
    NewtonDiverged(String),
    #[error("continuation step underflow, last good kappa = {last_kappa}")]
    KappaUnderflow { last_kappa: f64 },
    #[error("oracle unavailable: {0}")]
    OracleUnavailable(String),
    #[error("missing prerequisite artifact: {0}")]
    MissingArtifact(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
