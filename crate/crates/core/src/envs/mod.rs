//! Deterministic toy POMDP environments.
//!
//! * `toyshop`: web shopping, dense attribute-match reward.
//! * `toylab`: science procedures, dense ordered-subgoal reward.
//! * `toyhouse`: household fetch-and-place, binary reward.
//!
//! All randomness lives in the instruction seed. The initial scene is part of
//! the instruction text; `reset` also returns a short scene observation.
//! Actions may start with free-form rationale words: everything before the
//! first command word is ignored.

pub mod house;
pub mod lab;
pub mod shop;

use std::ops::Range;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{Instruction, Source, Split, Step, Trajectory, TrajectoryRecord};
use crate::vocab::{TokenId, Vocabulary, END_OF_ACTION};

pub const INVALID: &[&str] = &["nothing", "happened"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvName {
    ToyShop,
    ToyLab,
    ToyHouse,
}

impl EnvName {
    pub const ALL: [EnvName; 3] = [EnvName::ToyShop, EnvName::ToyLab, EnvName::ToyHouse];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvName::ToyShop => "toyshop",
            EnvName::ToyLab => "toylab",
            EnvName::ToyHouse => "toyhouse",
        }
    }
}

impl std::fmt::Display for EnvName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EnvName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnvName::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown environment {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    DenseMatch,
    DenseSubgoal,
    Binary,
}

/// Hidden per-instruction goal record.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Goal {
    Shop(shop::ShopGoal),
    Lab(lab::LabGoal),
    House(house::HouseGoal),
}

/// An instruction together with its hidden goal.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub instruction: Instruction,
    pub goal: Goal,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
enum World {
    Shop(shop::ShopWorld),
    Lab(lab::LabWorld),
    House(house::HouseWorld),
}

/// Latent environment state for one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    instruction_id: String,
    goal: Goal,
    world: World,
    pub step_count: usize,
    pub done: bool,
}

impl EnvState {
    pub fn goal(&self) -> &Goal {
        &self.goal
    }

    pub fn instruction_id(&self) -> &str {
        &self.instruction_id
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    pub observation: Vec<TokenId>,
    pub done: bool,
}

/// Parsed action: the first command word and the words after it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parsed<'a> {
    pub command: &'a str,
    pub args: Vec<&'a str>,
}

pub(crate) fn parse_action<'a>(words: &[&'a str], commands: &[&str]) -> Option<Parsed<'a>> {
    let at = words.iter().position(|w| commands.contains(w))?;
    Some(Parsed {
        command: words[at],
        args: words[at + 1..].to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub observation: Vec<&'static str>,
    pub terminal: bool,
    pub invalid: bool,
}

impl Transition {
    pub fn observe(observation: Vec<&'static str>) -> Self {
        Self {
            observation,
            terminal: false,
            invalid: false,
        }
    }

    pub fn terminal(observation: Vec<&'static str>) -> Self {
        Self {
            observation,
            terminal: true,
            invalid: false,
        }
    }

    pub fn invalid() -> Self {
        Self {
            observation: INVALID.to_vec(),
            terminal: false,
            invalid: true,
        }
    }
}

/// Result of re-executing a trajectory's actions.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub reward: f64,
    pub success: bool,
    /// Partial reward after each action.
    pub progress: Vec<f64>,
    pub observations: Vec<Vec<TokenId>>,
}

const UNSEEN_SEED_BASE: u64 = 1_000_000;

/// Static description of one environment.
#[derive(Debug, Clone)]
pub struct EnvSpec {
    pub name: EnvName,
    pub max_steps: usize,
    pub reward_kind: RewardKind,
    pub vocab: Arc<Vocabulary>,
    pub seen_seeds: Range<u64>,
    pub unseen_seeds: Range<u64>,
}

impl EnvSpec {
    pub fn new(name: EnvName) -> Self {
        let (words, max_steps, reward_kind) = match name {
            EnvName::ToyShop => (shop::words(), 15, RewardKind::DenseMatch),
            EnvName::ToyLab => (lab::words(), 30, RewardKind::DenseSubgoal),
            EnvName::ToyHouse => (house::words(), 25, RewardKind::Binary),
        };
        let mut unique: Vec<&str> = Vec::with_capacity(words.len());
        for w in words {
            if !unique.contains(&w) {
                unique.push(w);
            }
        }
        let vocab = Vocabulary::new(unique).expect("environment word lists are valid");
        Self {
            name,
            max_steps,
            reward_kind,
            vocab: Arc::new(vocab),
            seen_seeds: 0..UNSEEN_SEED_BASE,
            unseen_seeds: UNSEEN_SEED_BASE..2 * UNSEEN_SEED_BASE,
        }
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn seeds(&self, split: Split) -> &Range<u64> {
        match split {
            Split::Seen => &self.seen_seeds,
            Split::Unseen => &self.unseen_seeds,
        }
    }

    fn commands(&self) -> &'static [&'static str] {
        match self.name {
            EnvName::ToyShop => &shop::COMMANDS,
            EnvName::ToyLab => &lab::COMMANDS,
            EnvName::ToyHouse => &house::COMMANDS,
        }
    }

    fn tokens(&self, words: &[&str]) -> Vec<TokenId> {
        self.vocab
            .tokenize_words(words)
            .expect("environment emits only vocabulary words")
    }

    /// Deterministically generates the instruction and hidden goal for `seed`.
    pub fn generate_instruction(&self, split: Split, seed: u64) -> Result<Task> {
        if !self.seeds(split).contains(&seed) {
            return Err(Error::Generation(format!(
                "seed {seed} outside the {} range {:?} of {}",
                split.as_str(),
                self.seeds(split),
                self.name
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (self.name as u64) << 56);
        let (words, goal) = match self.name {
            EnvName::ToyShop => {
                let (w, g) = shop::generate(split, &mut rng);
                (w, Goal::Shop(g))
            }
            EnvName::ToyLab => {
                let (w, g) = lab::generate(split, &mut rng);
                (w, Goal::Lab(g))
            }
            EnvName::ToyHouse => {
                let (w, g) = house::generate(split, &mut rng);
                (w, Goal::House(g))
            }
        };
        let instruction = Instruction {
            id: Instruction::make_id(self.name.as_str(), split, seed),
            tokens: self.tokens(&words),
            env_name: self.name.as_str().to_string(),
            variation: split,
        };
        Ok(Task {
            instruction,
            goal,
            seed,
        })
    }

    /// Regenerates the task behind an instruction, rejecting foreign ones.
    pub fn task_for(&self, instruction: &Instruction) -> Result<Task> {
        let (env, split, seed) = Instruction::parse_id(&instruction.id)
            .map_err(|e| Error::Environment(e.to_string()))?;
        if env != self.name.as_str() || instruction.env_name != self.name.as_str() {
            return Err(Error::Environment(format!(
                "instruction {} does not belong to {}",
                instruction.id, self.name
            )));
        }
        let task = self
            .generate_instruction(split, seed)
            .map_err(|e| Error::Environment(e.to_string()))?;
        if task.instruction != *instruction {
            return Err(Error::Environment(format!(
                "instruction {} does not match its regenerated text",
                instruction.id
            )));
        }
        Ok(task)
    }

    pub fn reset(&self, instruction: &Instruction) -> Result<(EnvState, Vec<TokenId>)> {
        let task = self.task_for(instruction)?;
        let (world, obs) = match &task.goal {
            Goal::Shop(g) => {
                let (w, o) = shop::reset(g);
                (World::Shop(w), o)
            }
            Goal::Lab(g) => {
                let (w, o) = lab::reset(g);
                (World::Lab(w), o)
            }
            Goal::House(g) => {
                let (w, o) = house::reset(g);
                (World::House(w), o)
            }
        };
        let state = EnvState {
            instruction_id: instruction.id.clone(),
            goal: task.goal,
            world,
            step_count: 0,
            done: false,
        };
        Ok((state, self.tokens(&obs)))
    }

    /// Applies one action. `action` may or may not carry a trailing `<eoa>`.
    pub fn step(&self, state: &mut EnvState, action: &[TokenId]) -> Result<StepOutcome> {
        if state.done {
            return Err(Error::Environment("step on a finished episode".into()));
        }
        let body = match action.split_last() {
            Some((&END_OF_ACTION, body)) => body,
            _ => action,
        };
        let words: Vec<&str> = body
            .iter()
            .map(|&t| self.vocab.detokenize(t).unwrap_or(""))
            .collect();
        let transition = match parse_action(&words, self.commands()) {
            None => Transition::invalid(),
            Some(cmd) => match (&mut state.world, &state.goal) {
                (World::Shop(w), Goal::Shop(g)) => shop::step(w, g, &cmd),
                (World::Lab(w), Goal::Lab(g)) => lab::step(w, g, &cmd),
                (World::House(w), Goal::House(g)) => house::step(w, g, &cmd),
                _ => unreachable!("world and goal kinds always agree"),
            },
        };
        state.step_count += 1;
        state.done = transition.terminal || state.step_count >= self.max_steps;
        Ok(StepOutcome {
            observation: self.tokens(&transition.observation),
            done: state.done,
        })
    }

    /// Reward the episode would receive if it ended now.
    pub fn progress(&self, state: &EnvState) -> f64 {
        match (&state.world, &state.goal) {
            (World::Shop(w), Goal::Shop(g)) => shop::reward(w, g),
            (World::Lab(w), _) => lab::progress(w),
            (World::House(w), Goal::House(g)) => house::reward(w, g),
            _ => unreachable!("world and goal kinds always agree"),
        }
    }

    pub fn final_reward(&self, state: &EnvState, goal: &Goal) -> Result<f64> {
        if !state.done {
            return Err(Error::Environment(
                "final reward requested before the episode ended".into(),
            ));
        }
        if *goal != state.goal {
            return Err(Error::Environment("goal does not belong to this episode".into()));
        }
        Ok(self.progress(state))
    }

    /// Environment-specific terminal success flag.
    pub fn success(&self, state: &EnvState) -> bool {
        match &state.world {
            World::Lab(w) => lab::success(w),
            _ => self.progress(state) >= 1.0,
        }
    }

    /// The scripted expert: always reaches reward 1.0.
    pub fn oracle_expert(&self, task: &Task) -> Result<Trajectory> {
        let plan = match &task.goal {
            Goal::Shop(g) => shop::expert_plan(g)
                .ok_or_else(|| Error::Oracle(format!("{}: no purchasable result", task.instruction.id)))?,
            Goal::Lab(g) => lab::expert_plan(g),
            Goal::House(g) => house::expert_plan(g),
        };
        let (mut state, _) = self.reset(&task.instruction)?;
        let mut steps = Vec::with_capacity(plan.len());
        for words in &plan {
            if state.done {
                return Err(Error::Oracle(format!(
                    "{}: episode ended before the plan finished",
                    task.instruction.id
                )));
            }
            let mut action = self.tokens(words);
            action.push(END_OF_ACTION);
            let out = self.step(&mut state, &action)?;
            steps.push(Step {
                action_tokens: action,
                observation_tokens: Some(out.observation),
            });
        }
        if !state.done {
            return Err(Error::Oracle(format!(
                "{}: plan did not end the episode",
                task.instruction.id
            )));
        }
        let reward = self.final_reward(&state, &task.goal)?;
        if reward != 1.0 {
            return Err(Error::Oracle(format!(
                "{}: plan reached reward {reward}",
                task.instruction.id
            )));
        }
        if let Some(last) = steps.last_mut() {
            last.observation_tokens = None;
        }
        Ok(Trajectory {
            instruction: task.instruction.clone(),
            steps,
            reward,
            source: Source::Expert,
            seed: task.seed,
        })
    }

    /// Re-executes the actions of `trajectory` from a fresh reset.
    pub fn replay(&self, trajectory: &Trajectory) -> Result<ReplayOutcome> {
        let (mut state, _) = self.reset(&trajectory.instruction)?;
        let mut progress = Vec::with_capacity(trajectory.steps.len());
        let mut observations = Vec::with_capacity(trajectory.steps.len());
        for (i, step) in trajectory.steps.iter().enumerate() {
            if state.done {
                return Err(Error::Replay(format!(
                    "{}: episode ended after {i} of {} steps",
                    trajectory.instruction.id,
                    trajectory.steps.len()
                )));
            }
            let out = self.step(&mut state, &step.action_tokens)?;
            if let Some(stored) = &step.observation_tokens {
                if *stored != out.observation {
                    return Err(Error::Replay(format!(
                        "{}: observation mismatch at step {i}",
                        trajectory.instruction.id
                    )));
                }
            }
            progress.push(self.progress(&state));
            observations.push(out.observation);
        }
        if !state.done {
            return Err(Error::Replay(format!(
                "{}: episode still running after the last step",
                trajectory.instruction.id
            )));
        }
        let goal = state.goal.clone();
        Ok(ReplayOutcome {
            reward: self.final_reward(&state, &goal)?,
            success: self.success(&state),
            progress,
            observations,
        })
    }

    /// Replays and checks that the stored reward is reproduced exactly.
    pub fn verify(&self, trajectory: &Trajectory) -> Result<ReplayOutcome> {
        let out = self.replay(trajectory)?;
        if out.reward != trajectory.reward {
            return Err(Error::Replay(format!(
                "{}: stored reward {} but replay gives {}",
                trajectory.instruction.id, trajectory.reward, out.reward
            )));
        }
        Ok(out)
    }

    pub fn to_record(&self, trajectory: &Trajectory) -> TrajectoryRecord {
        trajectory.to_record(self.name.as_str(), &self.vocab)
    }

    /// Rebuilds a trajectory from its record: the instruction is regenerated,
    /// tokens are recomputed and the actions are replayed.
    pub fn from_record(&self, record: &TrajectoryRecord) -> Result<Trajectory> {
        if record.env != self.name.as_str() {
            return Err(Error::InvalidTrajectory(format!(
                "record for {} loaded into {}",
                record.env, self.name
            )));
        }
        let (_, split, seed) = Instruction::parse_id(&record.instruction_id)?;
        if split != record.variation {
            return Err(Error::InvalidTrajectory(format!(
                "{}: variation field disagrees with id",
                record.instruction_id
            )));
        }
        let task = self.generate_instruction(split, seed)?;
        let mut steps = Vec::with_capacity(record.steps.len());
        for s in &record.steps {
            let mut action = self.vocab.tokenize(&s.action)?;
            action.push(END_OF_ACTION);
            let observation = s
                .observation
                .as_deref()
                .map(|o| self.vocab.tokenize(o))
                .transpose()?;
            steps.push(Step {
                action_tokens: action,
                observation_tokens: observation,
            });
        }
        let trajectory = Trajectory {
            instruction: task.instruction,
            steps,
            reward: record.reward,
            source: record.source,
            seed: record.seed,
        };
        trajectory.validate(&self.vocab, self.max_steps)?;
        self.verify(&trajectory)?;
        Ok(trajectory)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn act(spec: &EnvSpec, text: &str) -> Vec<TokenId> {
        let mut a = spec.vocab.tokenize(text).unwrap();
        a.push(END_OF_ACTION);
        a
    }

    #[test]
    fn generation_is_deterministic() {
        for name in EnvName::ALL {
            let spec = EnvSpec::new(name);
            let a = spec.generate_instruction(Split::Seen, 0).unwrap();
            let b = spec.generate_instruction(Split::Seen, 0).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn seed_out_of_range_is_rejected() {
        let spec = EnvSpec::new(EnvName::ToyShop);
        assert!(matches!(
            spec.generate_instruction(Split::Seen, UNSEEN_SEED_BASE + 3),
            Err(Error::Generation(_))
        ));
        assert!(spec.generate_instruction(Split::Unseen, 5).is_err());
    }

    #[test]
    fn toylab_unseen_objects_are_disjoint_from_seen() {
        let spec = EnvSpec::new(EnvName::ToyLab);
        let collect = |split: Split| -> HashSet<&'static str> {
            spec.seeds(split)
                .clone()
                .take(100)
                .map(|s| match spec.generate_instruction(split, s).unwrap().goal {
                    Goal::Lab(g) => g.object,
                    _ => unreachable!(),
                })
                .collect()
        };
        let seen = collect(Split::Seen);
        let unseen = collect(Split::Unseen);
        assert!(seen.is_disjoint(&unseen));
        assert!(unseen.iter().all(|o| !lab::SEEN_OBJECTS.contains(o)));
    }

    #[test]
    fn split_components_disjoint_in_every_env() {
        for name in EnvName::ALL {
            let spec = EnvSpec::new(name);
            let key = |g: &Goal| -> String {
                match g {
                    Goal::Shop(g) => shop::COLORS[g.color].to_string(),
                    Goal::Lab(g) => g.object.to_string(),
                    Goal::House(g) => g.object.to_string(),
                }
            };
            let seen: HashSet<String> = (0..100)
                .map(|s| key(&spec.generate_instruction(Split::Seen, s).unwrap().goal))
                .collect();
            let unseen: HashSet<String> = (0..100)
                .map(|s| {
                    key(&spec
                        .generate_instruction(Split::Unseen, UNSEEN_SEED_BASE + s)
                        .unwrap()
                        .goal)
                })
                .collect();
            assert!(seen.is_disjoint(&unseen), "{name}");
        }
    }

    #[test]
    fn toyshop_reset_shows_home_page() {
        let spec = EnvSpec::new(EnvName::ToyShop);
        let task = spec.generate_instruction(Split::Seen, 0).unwrap();
        let (state, obs) = spec.reset(&task.instruction).unwrap();
        assert_eq!(spec.vocab.render(&obs), "home");
        assert_eq!(state.step_count, 0);
    }

    #[test]
    fn toylab_reset_is_repeatable() {
        let spec = EnvSpec::new(EnvName::ToyLab);
        let task = spec.generate_instruction(Split::Seen, 4).unwrap();
        let a = spec.reset(&task.instruction).unwrap();
        let b = spec.reset(&task.instruction).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn toyhouse_reset_starts_at_zero() {
        let spec = EnvSpec::new(EnvName::ToyHouse);
        let task = spec.generate_instruction(Split::Seen, 9).unwrap();
        let (state, _) = spec.reset(&task.instruction).unwrap();
        assert_eq!(state.step_count, 0);
        assert!(!state.done);
    }

    #[test]
    fn foreign_instruction_rejected() {
        let shop = EnvSpec::new(EnvName::ToyShop);
        let lab = EnvSpec::new(EnvName::ToyLab);
        let task = lab.generate_instruction(Split::Seen, 1).unwrap();
        assert!(matches!(shop.reset(&task.instruction), Err(Error::Environment(_))));
        let mut forged = shop.generate_instruction(Split::Seen, 1).unwrap().instruction;
        forged.tokens.pop();
        assert!(shop.reset(&forged).is_err());
    }

    #[test]
    fn toyshop_buy_on_product_page_ends_episode() {
        let spec = EnvSpec::new(EnvName::ToyShop);
        let task = spec.generate_instruction(Split::Seen, 2).unwrap();
        let (mut st, _) = spec.reset(&task.instruction).unwrap();
        let o = spec.step(&mut st, &act(&spec, "search shirt")).unwrap();
        assert!(!o.done);
        let o = spec.step(&mut st, &act(&spec, "click r1")).unwrap();
        assert!(!o.done);
        let o = spec.step(&mut st, &act(&spec, "buy")).unwrap();
        assert!(o.done);
        assert!(spec.step(&mut st, &act(&spec, "buy")).is_err());
    }

    #[test]
    fn toylab_unknown_verb_changes_nothing() {
        let spec = EnvSpec::new(EnvName::ToyLab);
        let task = spec.generate_instruction(Split::Seen, 3).unwrap();
        let (mut st, _) = spec.reset(&task.instruction).unwrap();
        let before = st.clone();
        let o = spec.step(&mut st, &act(&spec, "kitchen sample")).unwrap();
        assert_eq!(spec.vocab.render(&o.observation), "nothing happened");
        assert_eq!(st.world, before.world);
        assert_eq!(st.step_count, 1);
        assert_eq!(spec.progress(&st), 0.0);
    }

    #[test]
    fn max_steps_truncates() {
        for name in EnvName::ALL {
            let spec = EnvSpec::new(name);
            let task = spec.generate_instruction(Split::Seen, 0).unwrap();
            let (mut st, _) = spec.reset(&task.instruction).unwrap();
            let junk = act(&spec, "nothing");
            for i in 1..=spec.max_steps {
                let o = spec.step(&mut st, &junk).unwrap();
                assert_eq!(o.done, i == spec.max_steps);
            }
            assert_eq!(spec.final_reward(&st, &task.goal).unwrap(), 0.0);
        }
    }

    #[test]
    fn final_reward_requires_done() {
        let spec = EnvSpec::new(EnvName::ToyHouse);
        let task = spec.generate_instruction(Split::Seen, 0).unwrap();
        let (st, _) = spec.reset(&task.instruction).unwrap();
        assert!(spec.final_reward(&st, &task.goal).is_err());
    }

    #[test]
    fn toyshop_full_match_scores_one() {
        let spec = EnvSpec::new(EnvName::ToyShop);
        let task = spec.generate_instruction(Split::Seen, 11).unwrap();
        let e = spec.oracle_expert(&task).unwrap();
        assert_eq!(e.reward, 1.0);
        assert_eq!(e.steps.len(), 5);
    }

    #[test]
    fn toylab_half_of_subgoals_is_half_reward() {
        let spec = EnvSpec::new(EnvName::ToyLab);
        // Find a 4-subgoal prefix on a task with 8 subgoals: go, take, and two
        // tail actions, then truncate with junk.
        let (task, goal) = (0..200)
            .find_map(|s| {
                let t = spec.generate_instruction(Split::Seen, s).unwrap();
                match &t.goal {
                    Goal::Lab(g) if g.subgoals().len() == 8 => Some((t.clone(), g.clone())),
                    _ => None,
                }
            })
            .unwrap();
        let plan = lab::expert_plan(&goal);
        let (mut st, _) = spec.reset(&task.instruction).unwrap();
        for words in &plan[..8] {
            let a = {
                let mut a = spec.vocab.tokenize_words(words).unwrap();
                a.push(END_OF_ACTION);
                a
            };
            spec.step(&mut st, &a).unwrap();
        }
        assert_eq!(spec.progress(&st), 0.5);
        let junk = act(&spec, "nothing");
        while !st.done {
            spec.step(&mut st, &junk).unwrap();
        }
        assert_eq!(spec.final_reward(&st, &task.goal).unwrap(), 0.5);
    }

    #[test]
    fn toyhouse_wrong_room_scores_zero() {
        let spec = EnvSpec::new(EnvName::ToyHouse);
        let task = spec.generate_instruction(Split::Seen, 5).unwrap();
        let Goal::House(g) = &task.goal else { unreachable!() };
        let g = g.clone();
        let (mut st, _) = spec.reset(&task.instruction).unwrap();
        let start = house::ROOMS[g.start];
        let rec = house::RECEPTACLES[g.receptacle];
        for a in [format!("go {start}"), format!("open {rec}"), "take item".into()] {
            spec.step(&mut st, &act(&spec, &a)).unwrap();
        }
        // Deliver to the start room instead of the destination.
        let o = spec.step(&mut st, &act(&spec, "put item")).unwrap();
        assert!(o.done);
        assert_eq!(spec.final_reward(&st, &task.goal).unwrap(), 0.0);
    }

    #[test]
    fn rationale_words_before_command_are_ignored() {
        let spec = EnvSpec::new(EnvName::ToyShop);
        let task = spec.generate_instruction(Split::Seen, 2).unwrap();
        let (mut a, _) = spec.reset(&task.instruction).unwrap();
        let (mut b, _) = spec.reset(&task.instruction).unwrap();
        let oa = spec.step(&mut a, &act(&spec, "search shirt")).unwrap();
        let ob = spec.step(&mut b, &act(&spec, "red large search shirt")).unwrap();
        assert_eq!(oa, ob);
    }

    #[test]
    fn oracle_meets_reward_and_length_targets() {
        for (name, lo, hi) in [
            (EnvName::ToyShop, 4.0, 6.0),
            (EnvName::ToyLab, 10.0, 18.0),
            (EnvName::ToyHouse, 7.0, 13.0),
        ] {
            let spec = EnvSpec::new(name);
            let mut total = 0usize;
            for seed in 0..100 {
                let task = spec.generate_instruction(Split::Seen, seed).unwrap();
                let e = spec.oracle_expert(&task).unwrap();
                assert_eq!(e.reward, 1.0);
                assert!(e.steps.len() <= spec.max_steps);
                let replay = spec.verify(&e).unwrap();
                assert_eq!(replay.reward, 1.0);
                assert!(replay.success);
                total += e.steps.len();
            }
            let mean = total as f64 / 100.0;
            assert!((lo..=hi).contains(&mean), "{name}: mean expert length {mean}");
        }
    }

    #[test]
    fn record_round_trip_replays() {
        for name in EnvName::ALL {
            let spec = EnvSpec::new(name);
            let task = spec.generate_instruction(Split::Unseen, UNSEEN_SEED_BASE + 7).unwrap();
            let e = spec.oracle_expert(&task).unwrap();
            let rec = spec.to_record(&e);
            let line = serde_json::to_string(&rec).unwrap();
            let back: TrajectoryRecord = serde_json::from_str(&line).unwrap();
            assert_eq!(spec.from_record(&back).unwrap(), e);
        }
    }

    #[test]
    fn tampered_record_fails_replay() {
        let spec = EnvSpec::new(EnvName::ToyShop);
        let task = spec.generate_instruction(Split::Seen, 8).unwrap();
        let mut rec = spec.to_record(&spec.oracle_expert(&task).unwrap());
        rec.reward = 0.75;
        assert!(matches!(spec.from_record(&rec), Err(Error::Replay(_))));
    }
}
