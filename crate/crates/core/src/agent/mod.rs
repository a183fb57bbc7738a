//! Lightweight value-based agent: a fully connected Q-network, a bounded
//! replay buffer, a periodically synced target network and epsilon-greedy
//! action selection.

mod dqn;
mod mlp;
mod replay;

pub use dqn::{
    bellman_target, select_action, td_loss, td_loss_gradients, train_step, DqnAgent,
    EpsilonSchedule, Hyperparams,
};
pub use mlp::{Dense, Mlp, PolicySnapshot};
pub use replay::{ReplayBuffer, Transition};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid network shape: {0}")]
    Shape(String),
    #[error("training diverged at step {step}: loss {loss}")]
    Divergence { step: u64, loss: f64 },
    #[error("batch has {got} transitions, expected {expected}")]
    BatchSize { expected: usize, got: usize },
    #[error("invalid transition: {0}")]
    Transition(String),
    #[error("invalid hyperparameter {key}: {reason}")]
    Hyperparam { key: &'static str, reason: String },
    #[error("malformed policy snapshot: {0}")]
    Snapshot(String),
}
