//! Model-based adversarial actor-critic for the path-tracking task.
//!
//! A critic is regressed onto targets built from sampled model rollouts;
//! protagonist and adversary policies then take simultaneous descent and
//! ascent steps on `r + gamma V(s')`, differentiating through the model.
//! The four [`Algorithm`] variants differ only in how targets are aggregated
//! and whether an adversary exists.

mod agent;
mod buffer;
mod config;
mod surrogate;
mod train;

pub use agent::{monte_carlo_target, Agent, AgentCheckpoint, PolicyGraph, PolicyStep, TargetRule};
pub use buffer::{ReplayBuffer, Transition};
pub use config::{Algorithm, ConfigError, TrainConfig};
pub use surrogate::TabularModel;
pub use train::{
    default_sweep_grid, evaluate, grid, metrics_csv, robustness_sweep, sweep_csv, train, EvalResult, MetricsRow,
    TrainOutcome, METRICS_HEADER,
};

use thiserror::Error;

use crate::autodiff::AdError;
use crate::pathtrack::PathError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SaacError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("model step failed: {0}")]
    Model(#[from] PathError),
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error("non-finite loss {loss}")]
    NonFiniteLoss { loss: f64 },
    #[error("non-finite gradient in the {network} network")]
    NonFiniteGradient { network: &'static str },
}
