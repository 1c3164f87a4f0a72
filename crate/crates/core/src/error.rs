use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("singular linear system in excitation sector {sector}")]
    SingularSystem { sector: usize },
    #[error("output flux {flux:e} is below the correlation guard; g2 is undefined")]
    UndefinedCorrelation { flux: f64 },
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("integration failure: {0}")]
    IntegrationFailure(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
