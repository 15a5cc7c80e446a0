//! Exploration, failure/success pairing and iterative preference training.

use serde::{Deserialize, Serialize};

use super::sft::behavioral_cloning;
use super::train::{epoch_batches, run_schedule, Batch, TrainConfig, Trained};
use crate::envs::{EnvSpec, RewardKind};
use crate::error::{Error, Result};
use crate::losses::{preference_loss_into, PreparedPair, BETA_BINARY, BETA_DENSE};
use crate::policy::{rollout, PolicyParams, RolloutConfig};
use crate::seed;
use crate::trajectory::{pair_from_rollout, Trajectory, TrajectoryPair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EtoConfig {
    pub iterations: usize,
    /// Behavioral-cloning phase of [`eto`]. Not serialized: experiment
    /// configs carry a single top-level cloning section.
    #[serde(skip)]
    pub sft: TrainConfig,
    pub dpo: TrainConfig,
    pub beta: f64,
    pub rollouts_per_instruction: usize,
    pub explore_temperature: f64,
    /// Train each iteration on all pairs collected so far instead of only
    /// the newest ones.
    pub accumulate_pairs: bool,
}

impl Default for EtoConfig {
    fn default() -> Self {
        Self {
            iterations: 2,
            sft: TrainConfig::default(),
            dpo: TrainConfig::default(),
            beta: BETA_DENSE,
            rollouts_per_instruction: 1,
            explore_temperature: 0.0,
            accumulate_pairs: false,
        }
    }
}

impl EtoConfig {
    /// Defaults keyed on the reward structure of the environment.
    pub fn for_env(spec: &EnvSpec) -> Self {
        match spec.reward_kind {
            RewardKind::Binary => Self {
                iterations: 1,
                beta: BETA_BINARY,
                ..Self::default()
            },
            _ => Self::default(),
        }
    }
}

/// Pairs produced by one exploration sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Exploration {
    pub pairs: Vec<TrajectoryPair>,
    pub rollouts: Vec<Trajectory>,
    /// Instructions whose rollout could not be produced or replayed.
    pub skipped: Vec<String>,
}

/// Rolls the policy out on every expert instruction and pairs each rollout
/// with its expert trajectory; ties are discarded.
pub fn explore_and_pair(
    params: &PolicyParams,
    experts: &[Trajectory],
    spec: &EnvSpec,
    rollouts_per_instruction: usize,
    temperature: f64,
    seed: u64,
) -> Result<Exploration> {
    let mut out = Exploration {
        pairs: Vec::new(),
        rollouts: Vec::new(),
        skipped: Vec::new(),
    };
    for (i, expert) in experts.iter().enumerate() {
        for k in 0..rollouts_per_instruction {
            let cfg = RolloutConfig::sampled(temperature, seed::derive_path(seed, &[i as u64, k as u64]));
            let traj = match rollout(params, spec, &expert.instruction, &cfg).and_then(|t| spec.verify(&t).map(|_| t)) {
                Ok(t) => t,
                Err(e) => {
                    out.skipped.push(format!("{}: {e}", expert.instruction.id));
                    continue;
                }
            };
            if let Some(pair) = pair_from_rollout(expert, &traj)? {
                out.pairs.push(pair);
            }
            out.rollouts.push(traj);
        }
    }
    Ok(out)
}

/// Minimizes the preference loss over prepared pairs with a fixed reference.
pub fn train_preferences(
    params: &PolicyParams,
    pairs: &[PreparedPair],
    beta: f64,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Trained> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no preference pairs to train on".into()));
    }
    let schedule: Vec<Vec<Batch>> = (0..cfg.epochs)
        .map(|e| epoch_batches(pairs.len(), cfg.batch_size, seed, e))
        .collect();
    run_schedule(params, cfg, &schedule, |p, _, batch, grad| {
        let items: Vec<PreparedPair> = batch.iter().map(|&i| pairs[i].clone()).collect();
        preference_loss_into(p, beta, &items, grad)
    })
}

/// Prepares trajectory pairs against `reference`.
pub fn prepare_pairs(pairs: &[TrajectoryPair], spec: &EnvSpec, reference: &PolicyParams) -> Result<Vec<PreparedPair>> {
    pairs
        .iter()
        .map(|p| PreparedPair::from_pair(p, &spec.vocab, reference))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EtoIteration {
    pub params: PolicyParams,
    pub pairs: usize,
    /// Loss of the first batch, where the policy equals its reference.
    pub first_batch_loss: f64,
    pub epoch_losses: Vec<f64>,
    pub rollouts: Vec<Trajectory>,
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EtoOutcome {
    pub base: PolicyParams,
    pub iterations: Vec<EtoIteration>,
    /// Iteration (1-based) that produced no pairs, if the loop stopped early.
    pub stopped_early: Option<usize>,
}

impl EtoOutcome {
    pub fn final_params(&self) -> &PolicyParams {
        self.iterations.last().map_or(&self.base, |it| &it.params)
    }
}

/// Behavioral cloning followed by the exploration/training iterations.
pub fn eto(init: &PolicyParams, experts: &[Trajectory], spec: &EnvSpec, cfg: &EtoConfig, seed: u64) -> Result<EtoOutcome> {
    let base = behavioral_cloning(init, experts, &spec.vocab, &cfg.sft, seed::derive(seed, seed::label("bc")))?;
    eto_from_base(&base.params, experts, spec, cfg, seed)
}

/// The iterative phase starting from an already cloned base policy.
pub fn eto_from_base(
    base: &PolicyParams,
    experts: &[Trajectory],
    spec: &EnvSpec,
    cfg: &EtoConfig,
    seed: u64,
) -> Result<EtoOutcome> {
    let mut out = EtoOutcome {
        base: base.clone(),
        iterations: Vec::with_capacity(cfg.iterations),
        stopped_early: None,
    };
    let mut pool: Vec<TrajectoryPair> = Vec::new();
    for it in 1..=cfg.iterations {
        let reference = out.final_params().clone();
        let iter_seed = seed::derive_path(seed, &[seed::label("eto"), it as u64]);
        let ex = explore_and_pair(
            &reference,
            experts,
            spec,
            cfg.rollouts_per_instruction,
            cfg.explore_temperature,
            seed::derive(iter_seed, 0),
        )?;
        if cfg.accumulate_pairs {
            pool.extend(ex.pairs.iter().cloned());
        } else {
            pool = ex.pairs.clone();
        }
        if pool.is_empty() {
            out.stopped_early = Some(it);
            break;
        }
        let prepared = prepare_pairs(&pool, spec, &reference)?;
        let trained = train_preferences(&reference, &prepared, cfg.beta, &cfg.dpo, seed::derive(iter_seed, 1))?;
        out.iterations.push(EtoIteration {
            params: trained.params,
            pairs: pool.len(),
            first_batch_loss: trained.first_batch_loss.unwrap_or(f64::NAN),
            epoch_losses: trained.epoch_losses,
            rollouts: ex.rollouts,
            skipped: ex.skipped,
        });
    }
    Ok(out)
}
