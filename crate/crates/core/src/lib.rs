//! Learning text-environment agent policies from failure/success trajectory
//! pairs.
//!
//! The crate contains the trajectory data model, three toy text environments,
//! a small autoregressive token policy with exact gradients, the training
//! objectives (masked imitation, trajectory- and step-level preference losses,
//! KL-regularized return), the training procedures built on them, and an
//! experiment harness.

pub mod algorithms;
pub mod envs;
pub mod error;
pub mod fixtures;
pub mod harness;
pub mod losses;
pub mod policy;
pub mod seed;
pub mod trajectory;
pub mod vocab;

pub use error::{Error, Result};
