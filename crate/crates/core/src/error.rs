use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A physical or numerical parameter lies outside its domain.
    #[error("parameter out of domain: {0}")]
    Domain(String),

    /// A run configuration is internally inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {left} vs {right} elements")]
    Shape { left: usize, right: usize },

    /// A statistic has no defined value for the given data.
    #[error("undefined statistic: {0}")]
    UndefinedStatistic(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
