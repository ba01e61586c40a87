use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("no known pixels to seed from")]
    NoKnownPixels,

    #[error("mask has no unknown pixels")]
    EmptyMask,

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("conjugate gradients did not converge in {iterations} iterations (relative residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("ill-posed system: {0}")]
    Conditioning(String),

    #[error("attention source empty: no fully known background patch")]
    AttentionSourceEmpty,

    #[error("network spec line {line}: {msg}")]
    Spec { line: usize, msg: String },

    #[error("weights: {0}")]
    Weights(String),

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Failures of a numerical procedure, as opposed to bad input data.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::Conditioning(_)
                | Error::AttentionSourceEmpty
                | Error::NonFiniteLoss { .. }
        )
    }
}
