use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("frequency plan infeasible: {0}")]
    PlanInfeasible(String),

    #[error("power model fit failed: {0}")]
    FitFailed(String),

    #[error("degenerate reference spectrum: {0}")]
    DegenerateReference(String),

    #[error("insufficient noise region: {remaining} of {total} bins left outside guards")]
    InsufficientNoiseRegion { remaining: usize, total: usize },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
