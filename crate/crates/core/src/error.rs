use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("infeasible target: {0}")]
    Infeasible(String),
    #[error("phase-space domain too small: {0}")]
    DomainTooSmall(String),
    #[error("integration failure at t = {t}: {reason}")]
    IntegrationFailure { t: f64, reason: String },
    #[error("transform inconsistency: {0}")]
    TransformInconsistency(String),
    #[error("metric failure: {0}")]
    Metric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
