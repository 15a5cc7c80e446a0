//! Autoregressive action sampling against an environment.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{PolicyParams, Scratch};
use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::trajectory::{Instruction, Source, Step, Trajectory};
use crate::vocab::{
    TokenId, Vocabulary, ACTION_START, END_OF_ACTION, INSTRUCTION_START, OBSERVATION_START,
};

pub const DEFAULT_ACTION_BUDGET: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    /// Sampling temperature; 0 is greedy argmax.
    pub temperature: f64,
    /// Step cap below the environment's own. Episodes cut this way only
    /// replay against an environment with the same cap.
    pub max_steps: Option<usize>,
    pub seed: u64,
    pub action_budget: usize,
}

impl RolloutConfig {
    pub fn greedy() -> Self {
        Self {
            temperature: 0.0,
            max_steps: None,
            seed: 0,
            action_budget: DEFAULT_ACTION_BUDGET,
        }
    }

    pub fn sampled(temperature: f64, seed: u64) -> Self {
        Self {
            temperature,
            seed,
            ..Self::greedy()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!("temperature {} must be finite and >= 0", self.temperature)));
        }
        if self.action_budget == 0 {
            return Err(Error::Config("action budget must be positive".into()));
        }
        Ok(())
    }
}

/// Side information about a rollout.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolloutStats {
    /// Actions cut off at the token budget and closed with `<eoa>`.
    pub forced_terminations: usize,
}

/// Whether `id` may be emitted as the `position`-th token of an action.
pub fn sampleable(id: TokenId, position: usize) -> bool {
    if id == END_OF_ACTION {
        position > 0
    } else {
        !Vocabulary::is_structural(id)
    }
}

/// Picks the next token from log-probabilities under the sampling rules.
pub fn choose_token(log_probs: &[f64], position: usize, temperature: f64, rng: &mut ChaCha8Rng) -> TokenId {
    let allowed = (0..log_probs.len() as TokenId).filter(|&t| sampleable(t, position));
    if temperature == 0.0 {
        let mut best = None::<(TokenId, f64)>;
        for t in allowed {
            let lp = log_probs[t as usize];
            if best.is_none_or(|(_, b)| lp > b) {
                best = Some((t, lp));
            }
        }
        return best.expect("vocabulary has a sampleable token").0;
    }
    let ids: Vec<TokenId> = allowed.collect();
    let scaled: Vec<f64> = ids.iter().map(|&t| log_probs[t as usize] / temperature).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scaled.iter().map(|&s| (s - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (&t, &w) in ids.iter().zip(&weights) {
        if u < w {
            return t;
        }
        u -= w;
    }
    *ids.last().expect("vocabulary has a sampleable token")
}

/// Samples one full episode from a fresh environment.
pub fn rollout(
    params: &PolicyParams,
    spec: &EnvSpec,
    instruction: &Instruction,
    cfg: &RolloutConfig,
) -> Result<Trajectory> {
    rollout_with_stats(params, spec, instruction, cfg).map(|(t, _)| t)
}

pub fn rollout_with_stats(
    params: &PolicyParams,
    spec: &EnvSpec,
    instruction: &Instruction,
    cfg: &RolloutConfig,
) -> Result<(Trajectory, RolloutStats)> {
    continue_rollout(params, spec, instruction, &[], cfg)
}

/// Teacher-forces `prefix` (re-executing its actions) and then samples until
/// the episode ends. The returned trajectory contains the prefix steps.
pub fn continue_rollout(
    params: &PolicyParams,
    spec: &EnvSpec,
    instruction: &Instruction,
    prefix: &[Step],
    cfg: &RolloutConfig,
) -> Result<(Trajectory, RolloutStats)> {
    cfg.validate()?;
    if params.arch.vocab_size != spec.vocab.len() {
        return Err(Error::InvalidInput(format!(
            "policy vocabulary size {} does not match {} ({})",
            params.arch.vocab_size,
            spec.name,
            spec.vocab.len()
        )));
    }
    let capped;
    let spec = match cfg.max_steps {
        Some(m) if m < spec.max_steps => {
            capped = spec.clone().with_max_steps(m);
            &capped
        }
        _ => spec,
    };
    let (mut state, _) = spec.reset(instruction)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut scratch = Scratch::new(&params.arch);
    let mut stats = RolloutStats::default();
    let mut context: Vec<TokenId> = Vec::with_capacity(256);
    context.push(INSTRUCTION_START);
    context.extend_from_slice(&instruction.tokens);
    let mut steps: Vec<Step> = Vec::with_capacity(spec.max_steps);

    let push_step = |context: &mut Vec<TokenId>, steps: &mut Vec<Step>, action: Vec<TokenId>, obs: Vec<TokenId>, done: bool| {
        context.push(OBSERVATION_START);
        context.extend_from_slice(&obs);
        steps.push(Step {
            action_tokens: action,
            observation_tokens: (!done).then_some(obs),
        });
    };

    for step in prefix {
        if state.done {
            return Err(Error::InvalidTrajectory("prefix outlives the episode".into()));
        }
        context.push(ACTION_START);
        context.extend_from_slice(&step.action_tokens);
        let out = spec.step(&mut state, &step.action_tokens)?;
        if out.done {
            return Err(Error::InvalidTrajectory("prefix ends the episode".into()));
        }
        push_step(&mut context, &mut steps, step.action_tokens.clone(), out.observation, false);
    }

    while !state.done {
        context.push(ACTION_START);
        let mut action = Vec::with_capacity(cfg.action_budget + 1);
        loop {
            if action.len() == cfg.action_budget {
                action.push(END_OF_ACTION);
                stats.forced_terminations += 1;
                break;
            }
            params.next_token_log_probs(&context, &mut scratch)?;
            let t = choose_token(&scratch.log_probs, action.len(), cfg.temperature, &mut rng);
            action.push(t);
            context.push(t);
            if t == END_OF_ACTION {
                break;
            }
        }
        if *context.last().expect("nonempty") != END_OF_ACTION {
            context.push(END_OF_ACTION);
        }
        let out = spec.step(&mut state, &action)?;
        push_step(&mut context, &mut steps, action, out.observation, out.done);
    }
    let goal = state.goal().clone();
    let reward = spec.final_reward(&state, &goal)?;
    Ok((
        Trajectory {
            instruction: instruction.clone(),
            steps,
            reward,
            source: Source::Rollout,
            seed: cfg.seed,
        },
        stats,
    ))
}
