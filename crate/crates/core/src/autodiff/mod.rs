//! Reverse-mode differentiation over dense and sparse matrix products.

pub mod init;
pub mod optim;
pub mod tape;
pub mod tensor;

use thiserror::Error;

pub use init::glorot_uniform;
pub use optim::{Adam, AdamConfig, Optimizer, Sgd};
pub use tape::{Gradients, Tape, Var, MAPE_FLOOR};
pub use tensor::{Scalar, Tensor};

#[derive(Debug, Error, PartialEq)]
pub enum AutodiffError {
    #[error("tensors must have rank 1 to 3, got {0}")]
    Rank(usize),
    #[error("shape {shape:?} does not match data length {len}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch { op: &'static str, left: Vec<usize>, right: Vec<usize> },
    #[error("tape was already consumed by a backward pass")]
    StaleTape,
    #[error("every target is below the MAPE floor")]
    NoParticipatingEntries,
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("optimizer received {found} gradients for {expected} parameters")]
    ParamCount { expected: usize, found: usize },
}
