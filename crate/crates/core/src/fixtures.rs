//! Random synthetic trajectories and small networks for oracle tests and
//! gradient checks. None of this touches an environment.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::losses::StepPair;
use crate::policy::{Architecture, PolicyParams};
use crate::trajectory::{Instruction, Source, Split, Step, Trajectory, TrajectoryPair};
use crate::vocab::{TokenId, Vocabulary, END_OF_ACTION, SPECIAL_TOKENS};

pub const WORDS: [&str; 10] = ["go", "take", "put", "red", "blue", "box", "ok", "door", "key", "room"];

pub fn vocab() -> Vocabulary {
    Vocabulary::new(WORDS).expect("fixture words are valid")
}

/// A network small enough for exhaustive finite differences.
pub fn tiny_arch(vocab: &Vocabulary) -> Architecture {
    Architecture {
        vocab_size: vocab.len(),
        embed_dim: 3,
        window: 6,
        hidden: 5,
    }
}

/// Parameters drawn uniformly from `[-scale, scale]`.
pub fn random_params(arch: Architecture, scale: f64, rng: &mut ChaCha8Rng) -> PolicyParams {
    let theta = (0..arch.param_count()).map(|_| rng.random_range(-scale..scale)).collect();
    PolicyParams { arch, theta }
}

fn word(rng: &mut ChaCha8Rng) -> TokenId {
    (SPECIAL_TOKENS.len() + rng.random_range(0..WORDS.len())) as TokenId
}

fn words(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> Vec<TokenId> {
    let n = rng.random_range(lo..=hi);
    (0..n).map(|_| word(rng)).collect()
}

pub fn random_action(rng: &mut ChaCha8Rng) -> Vec<TokenId> {
    let mut a = words(rng, 1, 4);
    a.push(END_OF_ACTION);
    a
}

pub fn random_instruction(rng: &mut ChaCha8Rng, id: u64) -> Instruction {
    Instruction {
        id: Instruction::make_id("fixture", Split::Seen, id),
        tokens: words(rng, 1, 5),
        env_name: "fixture".into(),
        variation: Split::Seen,
    }
}

pub fn random_steps(rng: &mut ChaCha8Rng, max_steps: usize) -> Vec<Step> {
    let n = rng.random_range(1..=max_steps);
    (0..n)
        .map(|i| Step {
            action_tokens: random_action(rng),
            observation_tokens: (i + 1 < n).then(|| words(rng, 0, 4)),
        })
        .collect()
}

/// Reward on a quarter grid, so ties are common.
pub fn random_reward(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(0..=4) as f64 / 4.0
}

pub fn random_trajectory(rng: &mut ChaCha8Rng, instruction: &Instruction, max_steps: usize) -> Trajectory {
    Trajectory {
        instruction: instruction.clone(),
        steps: random_steps(rng, max_steps),
        reward: random_reward(rng),
        source: Source::Rollout,
        seed: rng.random(),
    }
}

/// A pair with distinct rewards on a fresh instruction.
pub fn random_pair(rng: &mut ChaCha8Rng, id: u64, max_steps: usize) -> TrajectoryPair {
    let inst = random_instruction(rng, id);
    let mut a = random_trajectory(rng, &inst, max_steps);
    let mut b = random_trajectory(rng, &inst, max_steps);
    while a.reward == b.reward {
        a.reward = random_reward(rng);
        b.reward = random_reward(rng);
    }
    if a.reward < b.reward {
        std::mem::swap(&mut a, &mut b);
    }
    TrajectoryPair::new(a, b).expect("rewards are distinct")
}

/// Two different actions after a shared random prefix.
pub fn random_step_pair(rng: &mut ChaCha8Rng, id: u64, max_prefix: usize) -> StepPair {
    let inst = random_instruction(rng, id);
    let plen = rng.random_range(0..=max_prefix);
    let prefix = (0..plen)
        .map(|_| Step {
            action_tokens: random_action(rng),
            observation_tokens: Some(words(rng, 0, 3)),
        })
        .collect();
    let winner_action = random_action(rng);
    let mut loser_action = random_action(rng);
    while loser_action == winner_action {
        loser_action = random_action(rng);
    }
    StepPair {
        instruction: inst,
        prefix,
        winner_action,
        loser_action,
        winner_reward: 1.0,
        loser_reward: rng.random_range(0..=3) as f64 / 4.0,
    }
}
