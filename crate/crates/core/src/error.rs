use thiserror::Error;

/// Errors produced by the simulation and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or argument lies outside the domain of the model.
    #[error("domain error: {0}")]
    Domain(String),

    /// An adaptive integrator or quadrature failed to converge.
    #[error("numerical failure in {routine}: {detail}")]
    Numerical { routine: &'static str, detail: String },

    /// Input data is inconsistent (unordered streams, mismatched ensembles, ...).
    #[error("invalid input: {0}")]
    Input(String),

    /// Not enough data for a reportable estimate.
    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
