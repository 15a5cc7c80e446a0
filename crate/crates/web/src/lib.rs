//! WebAssembly bindings for the demo page in `www/`.
//!
//! Every export returns a JSON string. Failures come back as
//! `{"error": {"kind": ..., "message": ...}}`, the same shape the CLI prints.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use trajpref::algorithms::{behavioral_cloning, evaluate, TrainConfig};
use trajpref::envs::{EnvName, EnvSpec, EnvState, Task};
use trajpref::losses::{bt_preference_prob, log_sigmoid, sigmoid};
use trajpref::policy::{Architecture, PolicyParams};
use trajpref::trajectory::Split;
use trajpref::{Error, Result};

fn respond(r: Result<Value>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": { "kind": e.kind(), "message": e.to_string() } }).to_string(),
    }
}

/// Preference loss `-log σ(β(m - m_ref))`, its slope and the implied
/// preference probability over `points` policy margins `m` in `[lo, hi]`.
#[wasm_bindgen]
pub fn preference_curve(beta: f64, reference_margin: f64, lo: f64, hi: f64, points: usize) -> String {
    respond((|| {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidInput(format!("beta must be positive, got {beta}")));
        }
        if !(lo < hi) || points < 2 {
            return Err(Error::InvalidInput("need lo < hi and at least two points".into()));
        }
        let rows: Vec<Value> = (0..points)
            .map(|i| {
                let m = lo + (hi - lo) * i as f64 / (points - 1) as f64;
                let z = beta * (m - reference_margin);
                json!({
                    "margin": m,
                    "loss": -log_sigmoid(z),
                    "slope": -beta * sigmoid(-z),
                    "preference": bt_preference_prob(z, 0.0),
                })
            })
            .collect();
        Ok(json!({ "beta": beta, "reference_margin": reference_margin, "points": rows }))
    })())
}

/// One interactive episode of a toy environment.
#[wasm_bindgen]
pub struct Episode {
    spec: EnvSpec,
    task: Task,
    state: EnvState,
    log: Vec<(String, String)>,
}

#[wasm_bindgen]
impl Episode {
    /// Starts `env` (toyshop, toylab, toyhouse) on the seen-split instruction
    /// with the given seed.
    #[wasm_bindgen(constructor)]
    pub fn new(env: &str, seed: u64) -> std::result::Result<Episode, String> {
        Self::start(env, seed).map_err(|e| respond(Err(e)))
    }

    fn start(env: &str, seed: u64) -> Result<Episode> {
        let spec = EnvSpec::new(env.parse::<EnvName>()?);
        let task = spec.generate_instruction(Split::Seen, seed)?;
        let (state, _) = spec.reset(&task.instruction)?;
        Ok(Episode { spec, task, state, log: Vec::new() })
    }

    pub fn instruction(&self) -> String {
        self.spec.vocab.render(&self.task.instruction.tokens)
    }

    /// Words the parser understands.
    pub fn vocabulary(&self) -> String {
        json!(self.spec.vocab.tokens().iter().skip(6).collect::<Vec<_>>()).to_string()
    }

    /// Actions of the scripted expert for this instruction.
    pub fn expert_actions(&self) -> String {
        respond(self.spec.oracle_expert(&self.task).map(|t| {
            json!(t.steps.iter().map(|s| self.spec.vocab.render(s.action_body())).collect::<Vec<_>>())
        }))
    }

    /// Executes a space-separated action.
    pub fn step(&mut self, action: &str) -> String {
        respond((|| {
            let tokens = self.spec.vocab.tokenize(action)?;
            let out = self.spec.step(&mut self.state, &tokens)?;
            let observation = self.spec.vocab.render(&out.observation);
            self.log.push((action.to_string(), observation.clone()));
            let reward = if out.done { Some(self.spec.final_reward(&self.state, &self.task.goal)?) } else { None };
            Ok(json!({
                "observation": observation,
                "done": out.done,
                "steps": self.state.step_count,
                "max_steps": self.spec.max_steps,
                "progress": self.spec.progress(&self.state),
                "reward": reward,
            }))
        })())
    }

    pub fn history(&self) -> String {
        json!(self.log.iter().map(|(a, o)| json!({ "action": a, "observation": o })).collect::<Vec<_>>()).to_string()
    }
}

/// Behavior-clones a fresh policy on `experts` scripted trajectories and
/// reports the loss per epoch plus greedy reward before and after on
/// `tests` held-out instructions.
#[wasm_bindgen]
pub fn tiny_cloning_run(env: &str, experts: usize, tests: usize, epochs: usize, seed: u64) -> String {
    respond(cloning_run(env, experts, tests, epochs, seed))
}

fn cloning_run(env: &str, experts: usize, tests: usize, epochs: usize, seed: u64) -> Result<Value> {
    if experts == 0 || tests == 0 || epochs == 0 {
        return Err(Error::InvalidInput("experts, tests and epochs must be positive".into()));
    }
    let spec = EnvSpec::new(env.parse::<EnvName>()?);
    let train = (0..experts as u64)
        .map(|i| spec.oracle_expert(&spec.generate_instruction(Split::Seen, seed * 100_000 + i)?))
        .collect::<Result<Vec<_>>>()?;
    let held_out = (0..tests as u64)
        .map(|i| spec.generate_instruction(Split::Seen, 500_000 + seed * 1_000 + i).map(|t| t.instruction))
        .collect::<Result<Vec<_>>>()?;
    let arch = Architecture::new(spec.vocab.len());
    let init = PolicyParams::init(arch, seed);
    let cfg = TrainConfig { epochs, batch_size: 16, lr: 3e-3, ..TrainConfig::default() };
    let before = evaluate(&init, &spec, &held_out)?;
    let trained = behavioral_cloning(&init, &train, &spec.vocab, &cfg, seed)?;
    let after = evaluate(&trained.params, &spec, &held_out)?;
    let sample = trajpref::policy::rollout(&trained.params, &spec, &held_out[0], &trajpref::policy::RolloutConfig::greedy())?;
    Ok(json!({
        "parameters": init.len(),
        "epoch_losses": trained.epoch_losses,
        "reward_before": before.average_reward,
        "reward_after": after.average_reward,
        "sample": {
            "instruction": spec.vocab.render(&held_out[0].tokens),
            "actions": sample.steps.iter().map(|s| spec.vocab.render(s.action_body())).collect::<Vec<_>>(),
            "reward": sample.reward,
        },
    }))
}
