//! Step-level preference training from teacher-forced expert prefixes, and
//! its 1:1 mixture with trajectory-level pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eto::{explore_and_pair, prepare_pairs};
use super::train::{epoch_batches, run_schedule, Batch, TrainConfig};
use crate::envs::EnvSpec;
use crate::error::Result;
use crate::losses::{preference_loss_into, PreparedPair, StepPair, BETA_BINARY, BETA_DENSE};
use crate::policy::{continue_rollout, PolicyParams, RolloutConfig};
use crate::seed;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepwiseConfig {
    pub iterations: usize,
    pub dpo: TrainConfig,
    /// Preference temperature for step-level pairs.
    pub beta: f64,
    /// Preference temperature for trajectory-level pairs (mixture only).
    pub trajectory_beta: f64,
    pub explore_temperature: f64,
}

impl Default for StepwiseConfig {
    fn default() -> Self {
        Self {
            iterations: 2,
            dpo: TrainConfig::default(),
            beta: BETA_BINARY,
            trajectory_beta: BETA_DENSE,
            explore_temperature: 0.0,
        }
    }
}

/// For each expert trajectory, cuts at a uniformly chosen step, lets the
/// policy act from there and pairs the expert action against the policy's
/// when the continuation scores lower.
pub fn collect_step_pairs(
    policy: &PolicyParams,
    experts: &[Trajectory],
    spec: &EnvSpec,
    temperature: f64,
    seed: u64,
) -> Result<Vec<StepPair>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for (i, expert) in experts.iter().enumerate() {
        let cut = rng.random_range(0..expert.steps.len());
        let prefix = &expert.steps[..cut];
        let cfg = RolloutConfig::sampled(temperature, seed::derive(seed, i as u64));
        let (traj, _) = continue_rollout(policy, spec, &expert.instruction, prefix, &cfg)?;
        let loser_action = &traj.steps[cut].action_tokens;
        let winner_action = &expert.steps[cut].action_tokens;
        if traj.reward < expert.reward && loser_action != winner_action {
            pairs.push(StepPair {
                instruction: expert.instruction.clone(),
                prefix: prefix.to_vec(),
                winner_action: winner_action.clone(),
                loser_action: loser_action.clone(),
                winner_reward: expert.reward,
                loser_reward: traj.reward,
            });
        }
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepwiseIteration {
    pub params: PolicyParams,
    pub step_pairs: usize,
    pub trajectory_pairs: usize,
    pub first_batch_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepwiseOutcome {
    pub base: PolicyParams,
    pub iterations: Vec<StepwiseIteration>,
}

impl StepwiseOutcome {
    pub fn final_params(&self) -> &PolicyParams {
        self.iterations.last().map_or(&self.base, |it| &it.params)
    }
}

pub fn stepwise(base: &PolicyParams, experts: &[Trajectory], spec: &EnvSpec, cfg: &StepwiseConfig, seed: u64) -> Result<StepwiseOutcome> {
    run(base, experts, spec, cfg, seed, false)
}

/// Interleaves trajectory-level and step-level batches one to one.
pub fn mixture(base: &PolicyParams, experts: &[Trajectory], spec: &EnvSpec, cfg: &StepwiseConfig, seed: u64) -> Result<StepwiseOutcome> {
    run(base, experts, spec, cfg, seed, true)
}

fn run(
    base: &PolicyParams,
    experts: &[Trajectory],
    spec: &EnvSpec,
    cfg: &StepwiseConfig,
    seed: u64,
    with_trajectories: bool,
) -> Result<StepwiseOutcome> {
    let mut out = StepwiseOutcome {
        base: base.clone(),
        iterations: Vec::with_capacity(cfg.iterations),
    };
    let tag = seed::label(if with_trajectories { "mixture" } else { "stepwise" });
    for it in 1..=cfg.iterations {
        let reference = out.final_params().clone();
        let iter_seed = seed::derive_path(seed, &[tag, it as u64]);
        let trajectory_pairs = if with_trajectories {
            let ex = explore_and_pair(&reference, experts, spec, 1, cfg.explore_temperature, seed::derive(iter_seed, 0))?;
            prepare_pairs(&ex.pairs, spec, &reference)?
        } else {
            Vec::new()
        };
        let n_traj = trajectory_pairs.len();
        let mut items: Vec<PreparedPair> = trajectory_pairs;
        let mut schedule: Vec<Vec<Batch>> = Vec::with_capacity(cfg.dpo.epochs);
        let mut step_total = 0;
        for epoch in 0..cfg.dpo.epochs {
            let step_seed = seed::derive_path(iter_seed, &[1, epoch as u64]);
            let steps = collect_step_pairs(&reference, experts, spec, cfg.explore_temperature, step_seed)?;
            let offset = items.len();
            step_total += steps.len();
            for p in &steps {
                items.push(PreparedPair::from_step_pair(p, &spec.vocab, &reference)?);
            }
            let step_batches: Vec<Batch> = epoch_batches(steps.len(), cfg.dpo.batch_size, step_seed, 0)
                .into_iter()
                .map(|b| b.into_iter().map(|i| i + offset).collect())
                .collect();
            let traj_batches = epoch_batches(n_traj, cfg.dpo.batch_size, seed::derive(iter_seed, 2), epoch);
            schedule.push(interleave(traj_batches, step_batches));
        }
        if schedule.iter().all(Vec::is_empty) {
            break;
        }
        let beta_step = cfg.beta;
        let beta_traj = cfg.trajectory_beta;
        let trained = run_schedule(&reference, &cfg.dpo, &schedule, |p, _, batch, grad| {
            let beta = if batch[0] < n_traj { beta_traj } else { beta_step };
            let b: Vec<PreparedPair> = batch.iter().map(|&i| items[i].clone()).collect();
            preference_loss_into(p, beta, &b, grad)
        })?;
        out.iterations.push(StepwiseIteration {
            params: trained.params,
            step_pairs: step_total,
            trajectory_pairs: n_traj,
            first_batch_loss: trained.first_batch_loss,
        });
    }
    Ok(out)
}

/// `a0 b0 a1 b1 ...`, with leftovers of the longer list appended.
fn interleave(a: Vec<Batch>, b: Vec<Batch>) -> Vec<Batch> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let mut ia = a.into_iter();
    let mut ib = b.into_iter();
    loop {
        match (ia.next(), ib.next()) {
            (None, None) => break,
            (x, y) => out.extend(x.into_iter().chain(y)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interleave_alternates_then_appends() {
        let a = vec![vec![0], vec![1], vec![2]];
        let b = vec![vec![10]];
        assert_eq!(interleave(a, b), vec![vec![0], vec![10], vec![1], vec![2]]);
    }
}
