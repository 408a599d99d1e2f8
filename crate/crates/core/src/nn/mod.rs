//! Minimal tensor engine with reverse-mode differentiation.
//!
//! Enough for the two GANs: valid 2-D convolution, replicate padding,
//! fully connected layers, the usual activations, binary cross-entropy,
//! SGD/Adam with a step-halving learning rate, and a checkpoint format.

mod checkpoint;
mod gradcheck;
mod graph;
mod layers;
mod optim;
mod tensor;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, Differentiable, GradCheckReport, FD_STEP};
pub use graph::{bce_value, Gradients, Graph, Padding, ParamStore, Var, BCE_EPS};
pub use layers::{LayerSpec, Sequential};
pub use optim::{Optimizer, OptimizerKind, TrainSchedule};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("loss must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("loss does not depend on any tracked parameter")]
    DetachedGraph,
    #[error("optimizer step without populated gradients")]
    MissingGrads,
    #[error("invalid layer: {0}")]
    InvalidLayer(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("checkpoint has bad magic")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checksum mismatch in {0}")]
    ChecksumMismatch(String),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;
