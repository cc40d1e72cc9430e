use alloc::string::String;

use crate::CellId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid action: {0}")]
    Action(String),
    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("forward cache does not belong to these parameters")]
    StaleCache,
    #[error("no usable samples for agent {agent}: {reason}")]
    EmptySet { agent: CellId, reason: String },
    #[error("singular covariance: zero sigma in latent dimension {dim}")]
    Singular { dim: usize },
    #[error("incompatible architecture: {0}")]
    Incompatible(String),
    #[error("malformed checkpoint: {0}")]
    Decode(String),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            actual,
        }
    }
}
