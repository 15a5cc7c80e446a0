//! Rejection-sampling fine-tuning, best-of-N sampling and the KL-regularized
//! policy-gradient baseline.

use serde::{Deserialize, Serialize};

use super::sft::supervised_finetune;
use super::train::TrainConfig;
use crate::envs::{EnvSpec, RewardKind};
use crate::error::{Error, Result};
use crate::losses::{clip_global_norm, OptimizerState};
use crate::policy::{rollout, PolicyParams, RolloutConfig, Scratch};
use crate::seed;
use crate::trajectory::{flatten, Instruction, Trajectory};

/// Reward threshold for keeping sampled trajectories.
pub fn default_threshold(spec: &EnvSpec) -> f64 {
    match spec.reward_kind {
        RewardKind::Binary => 1.0,
        _ => 0.7,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RftConfig {
    pub samples_per_instruction: usize,
    pub temperature: f64,
    /// `None` picks the environment default.
    pub threshold: Option<f64>,
    pub sft: TrainConfig,
}

impl Default for RftConfig {
    fn default() -> Self {
        Self {
            samples_per_instruction: 4,
            temperature: 1.0,
            threshold: None,
            sft: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RftOutcome {
    pub params: PolicyParams,
    /// The expert data followed by the accepted samples.
    pub augmented: Vec<Trajectory>,
    pub accepted: usize,
    pub threshold: f64,
}

/// Samples `k` rollouts per instruction and keeps those with reward `>= tau`.
pub fn sample_successes(
    params: &PolicyParams,
    instructions: &[Instruction],
    spec: &EnvSpec,
    k: usize,
    temperature: f64,
    tau: f64,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    let mut kept = Vec::new();
    for (i, inst) in instructions.iter().enumerate() {
        for j in 0..k {
            let cfg = RolloutConfig::sampled(temperature, seed::derive_path(seed, &[i as u64, j as u64]));
            let t = rollout(params, spec, inst, &cfg)?;
            if t.reward >= tau {
                kept.push(t);
            }
        }
    }
    Ok(kept)
}

/// Augments the expert set with successful samples and fine-tunes on it.
pub fn rft(base: &PolicyParams, experts: &[Trajectory], spec: &EnvSpec, cfg: &RftConfig, seed: u64) -> Result<RftOutcome> {
    let tau = cfg.threshold.unwrap_or_else(|| default_threshold(spec));
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Config(format!("threshold {tau} outside (0, 1]")));
    }
    let instructions: Vec<Instruction> = experts.iter().map(|t| t.instruction.clone()).collect();
    let extra = sample_successes(
        base,
        &instructions,
        spec,
        cfg.samples_per_instruction,
        cfg.temperature,
        tau,
        seed::derive(seed, seed::label("rft-sample")),
    )?;
    let accepted = extra.len();
    let mut augmented = experts.to_vec();
    augmented.extend(extra);
    let trained = supervised_finetune(base, &augmented, &spec.vocab, &cfg.sft, seed::derive(seed, seed::label("rft-sft")))?;
    Ok(RftOutcome {
        params: trained.params,
        augmented,
        accepted,
        threshold: tau,
    })
}

/// Seed of the `index`-th best-of-N sample, a prefix-stable stream.
pub fn sample_seed(seed: u64, index: usize) -> u64 {
    seed::derive(seed, index as u64)
}

/// Best of `n` temperature-1 samples; ties go to the lowest sample index.
pub fn best_of_n(params: &PolicyParams, instruction: &Instruction, spec: &EnvSpec, n: usize, seed: u64) -> Result<Trajectory> {
    if n == 0 {
        return Err(Error::Config("best-of-N needs N >= 1".into()));
    }
    let mut best: Option<Trajectory> = None;
    for i in 0..n {
        let t = rollout(params, spec, instruction, &RolloutConfig::sampled(1.0, sample_seed(seed, i)))?;
        if best.as_ref().is_none_or(|b| t.reward > b.reward) {
            best = Some(t);
        }
    }
    Ok(best.expect("n >= 1"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PgConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub samples_per_instruction: usize,
    pub temperature: f64,
    pub lr: f64,
    pub beta: f64,
    pub clip_norm: f64,
    pub baseline_momentum: f64,
    pub warmup_fraction: f64,
}

impl Default for PgConfig {
    fn default() -> Self {
        Self {
            epochs: 3,
            batch_size: 32,
            samples_per_instruction: 1,
            temperature: 1.0,
            lr: 1e-4,
            beta: 0.1,
            clip_norm: 1.0,
            baseline_momentum: 0.9,
            warmup_fraction: 0.03,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgOutcome {
    pub params: PolicyParams,
    /// Mean sampled reward of each update batch.
    pub batch_rewards: Vec<f64>,
    /// Pre-clipping gradient norm of each update.
    pub grad_norms: Vec<f64>,
}

/// Score-function ascent on reward minus `β` times the per-position KL to the
/// starting policy, with a running-mean baseline and global-norm clipping.
pub fn pg_baseline(base: &PolicyParams, instructions: &[Instruction], spec: &EnvSpec, cfg: &PgConfig, seed: u64) -> Result<PgOutcome> {
    if cfg.batch_size == 0 || cfg.samples_per_instruction == 0 {
        return Err(Error::Config("batch size and samples must be positive".into()));
    }
    let tc = TrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        lr: cfg.lr,
        weight_decay: 0.0,
        warmup_fraction: cfg.warmup_fraction,
    };
    let total = tc.steps_for(instructions.len());
    let mut opt = OptimizerState::new(tc.optimizer(total), base.len());
    let reference = base.clone();
    let mut params = base.clone();
    let mut grad = vec![0.0; base.len()];
    let mut scratch = Scratch::new(&base.arch);
    let mut baseline: Option<f64> = None;
    let mut out = PgOutcome {
        params: base.clone(),
        batch_rewards: Vec::with_capacity(total),
        grad_norms: Vec::with_capacity(total),
    };
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let batches = super::train::epoch_batches(instructions.len(), cfg.batch_size, seed, epoch);
        for batch in batches {
            let mut samples = Vec::with_capacity(batch.len() * cfg.samples_per_instruction);
            for &i in &batch {
                for j in 0..cfg.samples_per_instruction {
                    let s = seed::derive_path(seed, &[seed::label("pg"), step, i as u64, j as u64]);
                    samples.push(rollout(&params, spec, &instructions[i], &RolloutConfig::sampled(cfg.temperature, s))?);
                }
            }
            let n = samples.len() as f64;
            let mean_r = samples.iter().map(|t| t.reward).sum::<f64>() / n;
            let b = *baseline.get_or_insert(mean_r);
            grad.fill(0.0);
            for t in &samples {
                let flat = flatten(t, &spec.vocab)?;
                // Loss gradient: -(r - b)∇log π + β∇KL.
                params.accumulate_logprob_grad(&flat, -(t.reward - b) / n, &mut grad, &mut scratch)?;
                if cfg.beta != 0.0 {
                    params.accumulate_kl_grad(&reference, &flat, cfg.beta / n, &mut grad, &mut scratch)?;
                }
            }
            let norm = clip_global_norm(&mut grad, cfg.clip_norm);
            let backup = params.theta.clone();
            if let Err(e) = opt.step(&mut params.theta, &grad).and_then(|_| {
                if params.is_finite() {
                    Ok(())
                } else {
                    Err(Error::NonFinite("parameters after policy-gradient update".into()))
                }
            }) {
                params.theta = backup;
                return Err(Error::Aborted {
                    message: e.to_string(),
                    last_good: Box::new(params),
                });
            }
            baseline = Some(cfg.baseline_momentum * b + (1.0 - cfg.baseline_momentum) * mean_r);
            out.batch_rewards.push(mean_r);
            out.grad_norms.push(norm);
            step += 1;
        }
    }
    out.params = params;
    Ok(out)
}
