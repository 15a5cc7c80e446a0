//! Per-run metrics documents.

use serde::{Deserialize, Serialize};

use crate::algorithms::{EvalSummary, InstructionResult};
use crate::envs::EnvName;

use super::config::Method;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub average_reward: f64,
    pub success_rate: f64,
    pub forced_terminations: usize,
    pub records: Vec<InstructionResult>,
}

impl From<EvalSummary> for SplitMetrics {
    fn from(s: EvalSummary) -> Self {
        Self {
            average_reward: s.average_reward,
            success_rate: s.success_rate,
            forced_terminations: s.forced_terminations,
            records: s.records,
        }
    }
}

/// Summary numbers after one training phase or iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub phase: String,
    pub seen_reward: f64,
    pub unseen_reward: f64,
    pub seen_success: f64,
    pub unseen_success: f64,
    pub pairs: Option<usize>,
    pub first_batch_loss: Option<f64>,
}

impl IterationMetrics {
    pub fn new(iteration: usize, phase: &str, seen: &SplitMetrics, unseen: &SplitMetrics) -> Self {
        Self {
            iteration,
            phase: phase.into(),
            seen_reward: seen.average_reward,
            unseen_reward: unseen.average_reward,
            seen_success: seen.success_rate,
            unseen_success: unseen.success_rate,
            pairs: None,
            first_batch_loss: None,
        }
    }
}

/// Cumulative reward after each action of one evaluation episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub instruction_id: String,
    pub rewards: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub env: EnvName,
    pub method: Method,
    pub seed: u64,
    pub config_digest: String,
    pub seen: SplitMetrics,
    pub unseen: SplitMetrics,
    /// Iteration 0 is the starting policy of the method.
    pub iterations: Vec<IterationMetrics>,
    /// Seen-test reward-vs-step curves (toylab only).
    pub curves: Vec<Curve>,
    pub notes: Vec<String>,
    /// Kept out of the document so reruns are byte-identical.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl MetricsReport {
    /// Recomputes the split averages from the per-instruction records.
    pub fn is_consistent(&self) -> bool {
        [&self.seen, &self.unseen].iter().all(|s| {
            crate::algorithms::average_reward(&s.records) == s.average_reward
                && crate::algorithms::success_rate(self.env, &s.records) == s.success_rate
        })
    }
}

pub fn curves_for(env: EnvName, seen: &SplitMetrics) -> Vec<Curve> {
    if env != EnvName::ToyLab {
        return Vec::new();
    }
    seen.records
        .iter()
        .map(|r| Curve {
            instruction_id: r.instruction_id.clone(),
            rewards: r.progress.clone(),
        })
        .collect()
}
