//! Dense `f64` tensors, a reverse-mode tape, AdaDelta, and checkpoints.

mod check;
pub mod checkpoint;
mod graph;
mod params;
mod tensor;

use thiserror::Error;

pub use check::{gradient_check, gradient_check_sampled, relative_error, CheckReport, FD_STEP};
pub use graph::{sigmoid, softmax_and_nll, Graph, NodeId};
pub use params::{AdaDelta, Gradients, Param, ParamId, ParamStore};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("unsupported shape {0:?}")]
    BadShape(Vec<usize>),
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("node {0} does not belong to this graph")]
    UnknownNode(usize),
    #[error("duplicate parameter name {0:?}")]
    DuplicateParam(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
}
