use thiserror::Error;

use crate::torus::TorusPoint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two punctures were found on the same orbit line of the linear flow.
    /// `s` is the flow time carrying `first` onto `second`.
    #[error("construction rejected: {first} and {second} share an orbit (s = {s})")]
    ConstructionRejected {
        first: TorusPoint,
        second: TorusPoint,
        s: f64,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
