use alloc::string::String;

use crate::biot_savart::EllipticSolveReport;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A caller-supplied argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Two objects that must share a grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("elliptic solve did not converge after {} iterations (relative residual {:.3e})", .0.iterations, .0.residual)]
    NotConverged(EllipticSolveReport),

    /// A NaN or infinity appeared during time stepping.
    #[error("non-finite value detected at step {step}")]
    NonFinite { step: u64 },

    /// A rate fit was requested over too short a window.
    #[error("insufficient span for rate fit: {0}")]
    InsufficientSpan(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
