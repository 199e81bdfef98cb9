//! Dense `f64` tensors, a reverse-mode tape and the Adam/AMSGrad optimizer.
//!
//! Every model and every gradient-based importance measure is assembled from
//! the primitives recorded on [`Tape`].

pub mod check;
mod optim;
mod params;
mod tape;
mod tensor;

pub use optim::{AdamConfig, OptimizerState};
pub use params::{Checkpoint, ParamSet, CHECKPOINT_FORMAT_VERSION};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum GradError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("tape already consumed by a backward pass")]
    TapeConsumed,
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
