//! Imitation, preference and KL-regularized objectives with exact gradients.

use crate::error::{Error, Result};
use crate::policy::{PolicyParams, Scratch};
use crate::trajectory::{flatten, flatten_action_in_context, FlatSequence, Instruction, Step, Trajectory, TrajectoryPair};
use crate::vocab::Vocabulary;

/// Default preference temperature for dense-reward environments.
pub const BETA_DENSE: f64 = 0.1;
/// Default preference temperature for the binary-reward environment.
pub const BETA_BINARY: f64 = 0.5;

/// `β` plus the frozen reference policy.
#[derive(Debug, Clone, PartialEq)]
pub struct DpoConfig {
    pub beta: f64,
    pub reference: PolicyParams,
}

impl DpoConfig {
    pub fn new(beta: f64, reference: PolicyParams) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {beta}")));
        }
        Ok(Self { beta, reference })
    }
}

/// `log σ(x)`, stable for large |x|.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Bradley-Terry probability that the first trajectory is preferred.
pub fn bt_preference_prob(reward_w: f64, reward_l: f64) -> f64 {
    sigmoid(reward_w - reward_l)
}

/// Mean negative masked log-likelihood over `batch`, with its gradient.
pub fn sft_loss(params: &PolicyParams, batch: &[FlatSequence]) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; params.len()];
    let loss = sft_loss_into(params, batch, &mut grad)?;
    Ok((loss, grad))
}

pub(crate) fn sft_loss_into(params: &PolicyParams, batch: &[FlatSequence], grad: &mut [f64]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let w = 1.0 / batch.len() as f64;
    let mut s = Scratch::new(&params.arch);
    let mut loss = 0.0;
    for flat in batch {
        loss -= params.accumulate_logprob_grad(flat, -w, grad, &mut s)?;
    }
    Ok(loss * w)
}

/// A preference item reduced to two masked sequences and the reference
/// log-ratio, which stays fixed while the reference is frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedPair {
    pub winner: FlatSequence,
    pub loser: FlatSequence,
    pub reference_margin: f64,
}

impl PreparedPair {
    pub fn new(winner: FlatSequence, loser: FlatSequence, reference: &PolicyParams) -> Result<Self> {
        let reference_margin = reference.trajectory_logprob(&winner)? - reference.trajectory_logprob(&loser)?;
        Ok(Self {
            winner,
            loser,
            reference_margin,
        })
    }

    pub fn from_pair(pair: &TrajectoryPair, vocab: &Vocabulary, reference: &PolicyParams) -> Result<Self> {
        check_order(pair.winner.reward, pair.loser.reward)?;
        Self::new(flatten(&pair.winner, vocab)?, flatten(&pair.loser, vocab)?, reference)
    }

    pub fn from_step_pair(pair: &StepPair, vocab: &Vocabulary, reference: &PolicyParams) -> Result<Self> {
        pair.validate()?;
        let w = flatten_action_in_context(&pair.instruction, &pair.prefix, &pair.winner_action, vocab)?;
        let l = flatten_action_in_context(&pair.instruction, &pair.prefix, &pair.loser_action, vocab)?;
        Self::new(w, l, reference)
    }
}

fn check_order(rw: f64, rl: f64) -> Result<()> {
    if rw > rl {
        Ok(())
    } else {
        Err(Error::Contract(format!(
            "preference pair with winner reward {rw} not above loser reward {rl}"
        )))
    }
}

/// Mean `-log σ(β[(lp_w - lp_l) - ref_margin])` over prepared pairs.
pub fn preference_loss(params: &PolicyParams, beta: f64, batch: &[PreparedPair]) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; params.len()];
    let loss = preference_loss_into(params, beta, batch, &mut grad)?;
    Ok((loss, grad))
}

pub(crate) fn preference_loss_into(
    params: &PolicyParams,
    beta: f64,
    batch: &[PreparedPair],
    grad: &mut [f64],
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let n = batch.len() as f64;
    let mut s = Scratch::new(&params.arch);
    let mut loss = 0.0;
    for item in batch {
        let lw = params.trajectory_logprob(&item.winner)?;
        let ll = params.trajectory_logprob(&item.loser)?;
        let z = beta * ((lw - ll) - item.reference_margin);
        loss -= log_sigmoid(z);
        // d(-log σ(z))/dz = -σ(-z)
        let coef = beta * sigmoid(-z) / n;
        params.accumulate_logprob_grad(&item.winner, -coef, grad, &mut s)?;
        params.accumulate_logprob_grad(&item.loser, coef, grad, &mut s)?;
    }
    Ok(loss / n)
}

/// Trajectory-level preference loss against the frozen reference.
pub fn dpo_loss(params: &PolicyParams, cfg: &DpoConfig, batch: &[TrajectoryPair], vocab: &Vocabulary) -> Result<(f64, Vec<f64>)> {
    let prepared = batch
        .iter()
        .map(|p| PreparedPair::from_pair(p, vocab, &cfg.reference))
        .collect::<Result<Vec<_>>>()?;
    preference_loss(params, cfg.beta, &prepared)
}

/// Two alternative actions after the same teacher-forced expert prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPair {
    pub instruction: Instruction,
    pub prefix: Vec<Step>,
    pub winner_action: Vec<u32>,
    pub loser_action: Vec<u32>,
    pub winner_reward: f64,
    pub loser_reward: f64,
}

impl StepPair {
    pub fn validate(&self) -> Result<()> {
        if self.winner_action == self.loser_action {
            return Err(Error::Contract("step pair with identical actions".into()));
        }
        check_order(self.winner_reward, self.loser_reward)
    }
}

/// Action-level preference loss conditioned on the expert prefix.
pub fn stepwise_dpo_loss(params: &PolicyParams, cfg: &DpoConfig, batch: &[StepPair], vocab: &Vocabulary) -> Result<(f64, Vec<f64>)> {
    let prepared = batch
        .iter()
        .map(|p| PreparedPair::from_step_pair(p, vocab, &cfg.reference))
        .collect::<Result<Vec<_>>>()?;
    preference_loss(params, cfg.beta, &prepared)
}

/// Sampled estimate of the KL-regularized return of one trajectory.
pub fn kl_regularized_return(
    params: &PolicyParams,
    reference: &PolicyParams,
    trajectory: &Trajectory,
    vocab: &Vocabulary,
    beta: f64,
) -> Result<f64> {
    let flat = flatten(trajectory, vocab)?;
    let log_ratio = params.trajectory_logprob(&flat)? - reference.trajectory_logprob(&flat)?;
    Ok(trajectory.reward - beta * log_ratio)
}
