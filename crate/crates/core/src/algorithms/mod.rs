//! End-to-end training procedures: behavioral cloning, the exploration and
//! preference-training loop, and the comparison baselines.

mod baselines;
mod eto;
mod eval;
mod self_play;
mod sft;
mod stepwise;
mod train;

pub use baselines::{
    best_of_n, default_threshold, pg_baseline, rft, sample_seed, sample_successes, PgConfig, PgOutcome,
    RftConfig, RftOutcome,
};
pub use eto::{
    eto, eto_from_base, explore_and_pair, prepare_pairs, train_preferences, EtoConfig, EtoIteration,
    EtoOutcome, Exploration,
};
pub use eval::{average_reward, evaluate, score, success_rate, summarize, EvalSummary, InstructionResult};
pub use self_play::{best_vs_lower, sample_groups, self_play, SelfPlayConfig, SelfPlayMode, SelfPlayOutcome};
pub use sft::{behavioral_cloning, supervised_finetune};
pub use stepwise::{collect_step_pairs, mixture, stepwise, StepwiseConfig, StepwiseIteration, StepwiseOutcome};
pub use train::{TrainConfig, Trained};
