//! Training objectives, the optimizer and gradient checking.

mod gradcheck;
mod objectives;
mod optim;

pub use gradcheck::{grad_check, relative_error, GradCheckReport, DEFAULT_COORDINATES, RELATIVE_FLOOR};
pub use objectives::{
    bt_preference_prob, dpo_loss, kl_regularized_return, log_sigmoid, preference_loss, sft_loss,
    sigmoid, stepwise_dpo_loss, DpoConfig, PreparedPair, StepPair, BETA_BINARY, BETA_DENSE,
};
pub(crate) use objectives::{preference_loss_into, sft_loss_into};
pub use optim::{clip_global_norm, AdamWConfig, OptimizerState};
