use thiserror::Error;

use crate::numerics::ode::OdeError;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A method was asked to work outside the range where it is accurate.
    #[error("method domain: {0}")]
    MethodDomain(String),

    #[error("aliasing: {0}")]
    Aliasing(String),

    #[error(transparent)]
    Ode(#[from] OdeError),

    #[error("configuration: {0}")]
    Config(String),

    #[error("wall-clock budget of {budget_s} s exceeded ({elapsed_s:.1} s elapsed)")]
    Budget { budget_s: f64, elapsed_s: f64 },

    #[error("snapshot format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Numerical,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) | Error::Json(_) => ErrorClass::Input,
            Error::MethodDomain(_) | Error::Aliasing(_) | Error::Ode(_) | Error::Budget { .. } => {
                ErrorClass::Numerical
            }
            Error::Format(_) | Error::Io(_) => ErrorClass::Io,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
