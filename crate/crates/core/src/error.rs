use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument violates an operation's precondition.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// Ingested data (e.g. a tabulated spectrum) is malformed.
    #[error("invalid data: {0}")]
    Data(String),
    /// A least-squares fit could not be carried out.
    #[error("fit failed: {0}")]
    Fit(String),
    /// An estimator was asked for a value it cannot produce.
    #[error("estimation failed: {0}")]
    Estimation(String),
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! ensure_param {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::Error::Parameter(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure_param;
