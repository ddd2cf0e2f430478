use thiserror::Error;

/// Errors produced by the library and the experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of a density, a probability or a geometry.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid configuration (bad parameter values, unknown keys, malformed files).
    #[error("configuration error: {0}")]
    Config(String),

    /// A computation produced a non-finite value where a finite one is required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A caller broke a precondition (shape mismatch, unnormalized weights).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Every grid candidate ended with zero likelihood.
    #[error("identification failed: every candidate has zero likelihood")]
    IdentificationFailed,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
