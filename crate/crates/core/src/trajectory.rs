//! The trajectory data model: instructions, steps, trajectories, preference
//! pairs and the flat token layout the policy is trained on.
//!
//! Flat layout of a trajectory with `n` steps:
//!
//! ```text
//! <inst> u  (<act> a_j <eoa> <obs> o_j)*  <act> a_n <eoa>
//! ```
//!
//! The action mask is true exactly on the action tokens and their `<eoa>`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::{
    TokenId, Vocabulary, ACTION_START, END_OF_ACTION, INSTRUCTION_START, OBSERVATION_START,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Seen,
    Unseen,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Seen => "seen",
            Split::Unseen => "unseen",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seen" => Ok(Split::Seen),
            "unseen" => Ok(Split::Unseen),
            other => Err(Error::InvalidInput(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Expert,
    Rollout,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Instruction {
    pub id: String,
    pub tokens: Vec<TokenId>,
    pub env_name: String,
    pub variation: Split,
}

impl Instruction {
    /// Canonical id: `<env>-<split>-<seed>`.
    pub fn make_id(env_name: &str, split: Split, seed: u64) -> String {
        format!("{env_name}-{}-{seed}", split.as_str())
    }

    /// Inverse of [`Instruction::make_id`].
    pub fn parse_id(id: &str) -> Result<(String, Split, u64)> {
        let mut parts = id.rsplitn(3, '-');
        let (Some(seed), Some(split), Some(env)) = (parts.next(), parts.next(), parts.next())
        else {
            return Err(Error::InvalidInput(format!("malformed instruction id {id:?}")));
        };
        let seed = seed
            .parse::<u64>()
            .map_err(|_| Error::InvalidInput(format!("malformed instruction id {id:?}")))?;
        Ok((env.to_string(), split.parse()?, seed))
    }

    pub fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::InvalidTrajectory(format!(
                "instruction {} has no tokens",
                self.id
            )));
        }
        if let Some(&bad) = self.tokens.iter().find(|&&t| !vocab.contains_id(t)) {
            return Err(Error::InvalidTrajectory(format!(
                "instruction {} has unknown token id {bad}",
                self.id
            )));
        }
        Ok(())
    }
}

/// One agent action and the observation that followed it.
///
/// `action_tokens` always ends with `<eoa>`; the final step of a trajectory
/// carries no observation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Step {
    pub action_tokens: Vec<TokenId>,
    pub observation_tokens: Option<Vec<TokenId>>,
}

impl Step {
    /// Action tokens without the trailing `<eoa>`.
    pub fn action_body(&self) -> &[TokenId] {
        match self.action_tokens.split_last() {
            Some((&END_OF_ACTION, body)) => body,
            _ => &self.action_tokens,
        }
    }

    pub fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        match self.action_tokens.split_last() {
            Some((&END_OF_ACTION, body)) if !body.is_empty() => {}
            _ => {
                return Err(Error::InvalidTrajectory(
                    "action must be nonempty and end with <eoa>".into(),
                ))
            }
        }
        let all = self
            .action_tokens
            .iter()
            .chain(self.observation_tokens.iter().flatten());
        for &t in all {
            if !vocab.contains_id(t) {
                return Err(Error::InvalidTrajectory(format!("unknown token id {t}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub instruction: Instruction,
    pub steps: Vec<Step>,
    pub reward: f64,
    pub source: Source,
    pub seed: u64,
}

impl Trajectory {
    pub fn validate(&self, vocab: &Vocabulary, max_steps: usize) -> Result<()> {
        self.instruction.validate(vocab)?;
        if self.steps.is_empty() {
            return Err(Error::InvalidTrajectory("trajectory has no steps".into()));
        }
        if self.steps.len() > max_steps {
            return Err(Error::InvalidTrajectory(format!(
                "{} steps exceed max_steps {max_steps}",
                self.steps.len()
            )));
        }
        if !(0.0..=1.0).contains(&self.reward) {
            return Err(Error::InvalidTrajectory(format!(
                "reward {} outside [0, 1]",
                self.reward
            )));
        }
        for step in &self.steps {
            step.validate(vocab)?;
        }
        Ok(())
    }

    /// Total number of agent-emitted tokens, `<eoa>` markers included.
    pub fn action_token_count(&self) -> usize {
        self.steps.iter().map(|s| s.action_tokens.len()).sum()
    }

    pub fn to_record(&self, env: &str, vocab: &Vocabulary) -> TrajectoryRecord {
        let last = self.steps.len().saturating_sub(1);
        TrajectoryRecord {
            instruction_id: self.instruction.id.clone(),
            env: env.to_string(),
            variation: self.instruction.variation,
            seed: self.seed,
            reward: self.reward,
            source: self.source,
            steps: self
                .steps
                .iter()
                .enumerate()
                .map(|(i, s)| StepRecord {
                    action: vocab.render(s.action_body()),
                    observation: if i == last {
                        None
                    } else {
                        s.observation_tokens.as_ref().map(|o| vocab.render(o))
                    },
                })
                .collect(),
        }
    }
}

/// A contrastive training unit: `winner` strictly out-rewards `loser`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPair {
    pub instruction: Instruction,
    pub winner: Trajectory,
    pub loser: Trajectory,
}

impl TrajectoryPair {
    pub fn new(winner: Trajectory, loser: Trajectory) -> Result<Self> {
        if winner.instruction.id != loser.instruction.id {
            return Err(Error::Pairing(format!(
                "instruction ids differ: {} vs {}",
                winner.instruction.id, loser.instruction.id
            )));
        }
        if winner.reward <= loser.reward {
            return Err(Error::Contract(format!(
                "winner reward {} not above loser reward {}",
                winner.reward, loser.reward
            )));
        }
        Ok(Self {
            instruction: winner.instruction.clone(),
            winner,
            loser,
        })
    }
}

/// Builds a failure/success pair from an expert trajectory and a rollout on the
/// same instruction. Equal rewards produce no pair.
pub fn pair_from_rollout(expert: &Trajectory, rollout: &Trajectory) -> Result<Option<TrajectoryPair>> {
    if expert.instruction.id != rollout.instruction.id {
        return Err(Error::Pairing(format!(
            "instruction ids differ: {} vs {}",
            expert.instruction.id, rollout.instruction.id
        )));
    }
    if expert.reward == rollout.reward {
        return Ok(None);
    }
    let (winner, loser) = if expert.reward > rollout.reward {
        (expert.clone(), rollout.clone())
    } else {
        (rollout.clone(), expert.clone())
    };
    TrajectoryPair::new(winner, loser).map(Some)
}

/// A flattened token sequence with the agent-emitted positions marked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlatSequence {
    pub token_ids: Vec<TokenId>,
    pub action_mask: Vec<bool>,
}

impl FlatSequence {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn masked_count(&self) -> usize {
        self.action_mask.iter().filter(|&&m| m).count()
    }

    /// Recovers the contiguous runs of masked tokens, i.e. the actions.
    pub fn segment_actions(&self) -> Vec<Vec<TokenId>> {
        let mut out = Vec::new();
        let mut cur: Vec<TokenId> = Vec::new();
        for (&t, &m) in self.token_ids.iter().zip(&self.action_mask) {
            if m {
                cur.push(t);
            } else if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
        out
    }
}

/// Lays a trajectory out as a flat sequence (see module docs).
pub fn flatten(trajectory: &Trajectory, vocab: &Vocabulary) -> Result<FlatSequence> {
    trajectory.instruction.validate(vocab)?;
    if trajectory.steps.is_empty() {
        return Err(Error::InvalidTrajectory("trajectory has no steps".into()));
    }
    for step in &trajectory.steps {
        step.validate(vocab)?;
    }
    Ok(flatten_parts(
        &trajectory.instruction.tokens,
        &trajectory.steps,
        MaskMode::AllActions,
    ))
}

/// Flattens `prefix` followed by `action` and masks only `action`.
///
/// This is the conditional layout used by step-level preference pairs: the
/// prefix steps are teacher-forced context.
pub fn flatten_action_in_context(
    instruction: &Instruction,
    prefix: &[Step],
    action_tokens: &[TokenId],
    vocab: &Vocabulary,
) -> Result<FlatSequence> {
    instruction.validate(vocab)?;
    let last = Step {
        action_tokens: action_tokens.to_vec(),
        observation_tokens: None,
    };
    last.validate(vocab)?;
    let mut steps = Vec::with_capacity(prefix.len() + 1);
    for step in prefix {
        step.validate(vocab)?;
        if step.observation_tokens.is_none() {
            return Err(Error::InvalidTrajectory(
                "context step without an observation".into(),
            ));
        }
        steps.push(step.clone());
    }
    steps.push(last);
    Ok(flatten_parts(&instruction.tokens, &steps, MaskMode::LastActionOnly))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum MaskMode {
    AllActions,
    LastActionOnly,
}

fn flatten_parts(instruction: &[TokenId], steps: &[Step], mode: MaskMode) -> FlatSequence {
    let mut token_ids = Vec::with_capacity(instruction.len() + 1 + steps.len() * 8);
    let mut action_mask = Vec::with_capacity(token_ids.capacity());
    token_ids.push(INSTRUCTION_START);
    action_mask.push(false);
    for &t in instruction {
        token_ids.push(t);
        action_mask.push(false);
    }
    let last = steps.len() - 1;
    for (j, step) in steps.iter().enumerate() {
        let masked = mode == MaskMode::AllActions || j == last;
        token_ids.push(ACTION_START);
        action_mask.push(false);
        for &t in &step.action_tokens {
            token_ids.push(t);
            action_mask.push(masked);
        }
        if j != last {
            token_ids.push(OBSERVATION_START);
            action_mask.push(false);
            for &t in step.observation_tokens.iter().flatten() {
                token_ids.push(t);
                action_mask.push(false);
            }
        }
    }
    FlatSequence {
        token_ids,
        action_mask,
    }
}

/// Line-delimited persistence record of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub instruction_id: String,
    pub env: String,
    pub variation: Split,
    pub seed: u64,
    pub reward: f64,
    pub source: Source,
    pub steps: Vec<StepRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub action: String,
    pub observation: Option<String>,
}
