//! Minimal dense reverse-mode differentiation engine: tensors, a recording
//! tape with the layers the texture pipeline needs, Adam, and a
//! little-endian checkpoint format.

mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod init;
mod linalg;
mod params;
mod tape;
mod tensor;

use thiserror::Error;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use params::ParamStore;
pub use tape::{sigmoid, Activation, CustomBackward, Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("{op}: shape mismatch ({detail})")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EngineError {
    pub(crate) fn shape(op: &'static str, detail: String) -> Self {
        EngineError::ShapeMismatch { op, detail }
    }
}

#[cfg(test)]
mod tests;
