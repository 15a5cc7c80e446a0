//! The differentiable token policy: parameters, exact log-probabilities and
//! gradients, sampling, and checkpoints.

pub mod checkpoint;
mod network;
mod rollout;

pub use network::{log_softmax, Architecture, Layout, PolicyParams, Scratch};
pub use rollout::{
    choose_token, continue_rollout, rollout, rollout_with_stats, sampleable, RolloutConfig,
    RolloutStats, DEFAULT_ACTION_BUDGET,
};
