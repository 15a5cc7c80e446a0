//! Training without expert data: sampled rollouts are filtered or compared
//! against each other.

use serde::{Deserialize, Serialize};

use super::baselines::default_threshold;
use super::eto::{prepare_pairs, train_preferences};
use super::sft::supervised_finetune;
use super::train::TrainConfig;
use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::policy::{rollout, PolicyParams, RolloutConfig};
use crate::seed;
use crate::trajectory::{Instruction, Trajectory, TrajectoryPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelfPlayMode {
    EtoOnly,
    RftOnly,
    RftThenEto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelfPlayConfig {
    pub samples_per_instruction: usize,
    pub temperature: f64,
    pub threshold: Option<f64>,
    pub sft: TrainConfig,
    pub dpo: TrainConfig,
    pub beta: f64,
}

impl Default for SelfPlayConfig {
    fn default() -> Self {
        Self {
            samples_per_instruction: 4,
            temperature: 1.0,
            threshold: None,
            sft: TrainConfig::default(),
            dpo: TrainConfig::default(),
            beta: crate::losses::BETA_DENSE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfPlayOutcome {
    pub params: PolicyParams,
    /// Trajectories kept by the filtering stage.
    pub accepted: usize,
    /// Pairs used by the preference stage.
    pub pairs: usize,
    /// Stages skipped for lack of data.
    pub notes: Vec<String>,
}

/// Samples `k` rollouts per instruction, grouped by instruction.
pub fn sample_groups(
    params: &PolicyParams,
    instructions: &[Instruction],
    spec: &EnvSpec,
    k: usize,
    temperature: f64,
    seed: u64,
) -> Result<Vec<Vec<Trajectory>>> {
    instructions
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            (0..k)
                .map(|j| {
                    let cfg = RolloutConfig::sampled(temperature, seed::derive_path(seed, &[i as u64, j as u64]));
                    rollout(params, spec, inst, &cfg)
                })
                .collect()
        })
        .collect()
}

/// Pairs the best rollout of a group (lowest index among ties) against every
/// rollout with strictly lower reward.
pub fn best_vs_lower(group: &[Trajectory]) -> Result<Vec<TrajectoryPair>> {
    let Some(best) = group.iter().reduce(|b, t| if t.reward > b.reward { t } else { b }) else {
        return Ok(Vec::new());
    };
    group
        .iter()
        .filter(|t| t.reward < best.reward)
        .map(|t| TrajectoryPair::new(best.clone(), t.clone()))
        .collect()
}

pub fn self_play(
    init: &PolicyParams,
    instructions: &[Instruction],
    spec: &EnvSpec,
    cfg: &SelfPlayConfig,
    mode: SelfPlayMode,
    seed: u64,
) -> Result<SelfPlayOutcome> {
    let k = cfg.samples_per_instruction;
    if k == 0 {
        return Err(Error::Config("self-play needs at least one sample".into()));
    }
    let mut out = SelfPlayOutcome {
        params: init.clone(),
        accepted: 0,
        pairs: 0,
        notes: Vec::new(),
    };
    if matches!(mode, SelfPlayMode::RftOnly | SelfPlayMode::RftThenEto) {
        let tau = cfg.threshold.unwrap_or_else(|| default_threshold(spec));
        let groups = sample_groups(&out.params, instructions, spec, k, cfg.temperature, seed::derive(seed, seed::label("sp-rft")))?;
        let kept: Vec<Trajectory> = groups.into_iter().flatten().filter(|t| t.reward >= tau).collect();
        out.accepted = kept.len();
        if kept.is_empty() {
            out.notes.push(format!("no sample reached reward {tau}; filtering stage skipped"));
        } else {
            out.params = supervised_finetune(&out.params, &kept, &spec.vocab, &cfg.sft, seed::derive(seed, seed::label("sp-sft")))?.params;
        }
    }
    if matches!(mode, SelfPlayMode::EtoOnly | SelfPlayMode::RftThenEto) {
        let groups = sample_groups(&out.params, instructions, spec, k, cfg.temperature, seed::derive(seed, seed::label("sp-eto")))?;
        let mut pairs = Vec::new();
        for g in &groups {
            pairs.extend(best_vs_lower(g)?);
        }
        out.pairs = pairs.len();
        if pairs.is_empty() {
            out.notes.push("all samples tied on every instruction; preference stage skipped".into());
        } else {
            let reference = out.params.clone();
            let prepared = prepare_pairs(&pairs, spec, &reference)?;
            out.params = train_preferences(&reference, &prepared, cfg.beta, &cfg.dpo, seed::derive(seed, seed::label("sp-dpo")))?.params;
        }
    }
    Ok(out)
}
