//! Greedy evaluation on instruction sets.

use serde::{Deserialize, Serialize};

use crate::envs::{EnvName, EnvSpec};
use crate::error::Result;
use crate::policy::{rollout_with_stats, PolicyParams, RolloutConfig};
use crate::trajectory::{Instruction, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionResult {
    pub instruction_id: String,
    pub reward: f64,
    pub success: bool,
    pub steps: usize,
    /// Reward the episode would have after each action.
    pub progress: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub average_reward: f64,
    pub success_rate: f64,
    pub forced_terminations: usize,
    pub records: Vec<InstructionResult>,
}

/// Success rate as reported per environment: the binary environment reports
/// its average reward, the others the fraction of successful episodes.
pub fn success_rate(env: EnvName, records: &[InstructionResult]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let n = records.len() as f64;
    match env {
        EnvName::ToyHouse => records.iter().map(|r| r.reward).sum::<f64>() / n,
        _ => records.iter().filter(|r| r.success).count() as f64 / n,
    }
}

pub fn average_reward(records: &[InstructionResult]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().map(|r| r.reward).sum::<f64>() / records.len() as f64
}

/// Scores a finished trajectory by replaying it.
pub fn score(spec: &EnvSpec, trajectory: &Trajectory) -> Result<InstructionResult> {
    let replay = spec.verify(trajectory)?;
    Ok(InstructionResult {
        instruction_id: trajectory.instruction.id.clone(),
        reward: replay.reward,
        success: replay.success,
        steps: trajectory.steps.len(),
        progress: replay.progress,
    })
}

pub fn summarize(spec: &EnvSpec, records: Vec<InstructionResult>, forced_terminations: usize) -> EvalSummary {
    EvalSummary {
        average_reward: average_reward(&records),
        success_rate: success_rate(spec.name, &records),
        forced_terminations,
        records,
    }
}

/// Greedy (temperature 0) rollouts on every instruction.
pub fn evaluate(params: &PolicyParams, spec: &EnvSpec, instructions: &[Instruction]) -> Result<EvalSummary> {
    let cfg = RolloutConfig::greedy();
    let mut records = Vec::with_capacity(instructions.len());
    let mut forced = 0;
    for inst in instructions {
        let (traj, stats) = rollout_with_stats(params, spec, inst, &cfg)?;
        forced += stats.forced_terminations;
        records.push(score(spec, &traj)?);
    }
    Ok(summarize(spec, records, forced))
}
