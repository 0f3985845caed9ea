//! Reverse-mode automatic differentiation over dense 2-D tensors, plus the
//! small neural-network toolkit built on it: MLPs, a tanh-squashed Gaussian
//! policy head and first-order optimizers.

mod head;
mod mlp;
mod optim;
mod tape;
mod tensor;

pub use head::{SquashedGaussianHead, LOG_STD_MAX, LOG_STD_MIN};
pub use mlp::{Activation, MlpParams, MlpVars, OutputActivation};
pub use optim::{cosine_lr, polyak_update, Adam};
pub use tape::{gelu, gelu_grad, Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("log of a non-positive value")]
    LogOfNonPositive,
    #[error("non-finite parameter in layer {layer}")]
    NonFiniteParameter { layer: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
