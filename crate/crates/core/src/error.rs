//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failures raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A derivative or capability beyond what the object supports was requested.
    #[error("capability error: requested derivative order {requested} exceeds smoothness {available}")]
    Capability { requested: usize, available: usize },

    /// An argument is malformed (wrong dimension, empty range, unknown name).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A hypothesis of the requested bound was checked and found violated.
    #[error("precondition violated at u = {at}: {message}")]
    Precondition { at: f64, message: String },

    /// The non-degeneracy minimum over the compact set is not positive.
    #[error("non-degeneracy failure: minimum {minimum:e} at v = {v:?}, direction = {direction:?}")]
    NonDegeneracy {
        minimum: f64,
        v: Vec<f64>,
        direction: Vec<f64>,
    },

    /// A non-finite value appeared during an evaluation.
    #[error("non-finite value in {context} at {at}")]
    NonFinite { context: String, at: f64 },

    /// The velocity spectrum carries energy in the dealiasing band.
    #[error("aliasing guard: top third of the velocity spectrum holds fraction {fraction:e} of the energy")]
    Aliasing { fraction: f64 },

    /// The requested configuration is outside the supported regime.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A test function leaves the box it must be supported in.
    #[error("support violation: {0}")]
    Support(String),

    /// The characteristics map could not be made invertible on any admissible patch.
    #[error("singular characteristics map near {point:?}: {message}")]
    Singular { point: Vec<f64>, message: String },

    /// Serialization or deserialization failure.
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Format(e.to_string())
    }
}
