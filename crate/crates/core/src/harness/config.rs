//! Experiment configuration: environment defaults, file loading and
//! `key.path=value` overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::algorithms::{EtoConfig, PgConfig, RftConfig, SelfPlayConfig, StepwiseConfig, TrainConfig};
use crate::envs::{EnvName, EnvSpec, RewardKind};
use crate::error::{Error, Result};
use crate::losses::{BETA_BINARY, BETA_DENSE};
use crate::policy::Architecture;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Untuned,
    Sft,
    Eto,
    Rft,
    BestOfN,
    Pg,
    SelfPlayEto,
    SelfPlayRft,
    SelfPlayRftEto,
    Stepwise,
    Mixture,
}

impl Method {
    pub const ALL: [Method; 11] = [
        Method::Untuned,
        Method::Sft,
        Method::Eto,
        Method::Rft,
        Method::BestOfN,
        Method::Pg,
        Method::SelfPlayEto,
        Method::SelfPlayRft,
        Method::SelfPlayRftEto,
        Method::Stepwise,
        Method::Mixture,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Untuned => "untuned",
            Method::Sft => "sft",
            Method::Eto => "eto",
            Method::Rft => "rft",
            Method::BestOfN => "best_of_n",
            Method::Pg => "pg",
            Method::SelfPlayEto => "self_play_eto",
            Method::SelfPlayRft => "self_play_rft",
            Method::SelfPlayRftEto => "self_play_rft_eto",
            Method::Stepwise => "stepwise",
            Method::Mixture => "mixture",
        }
    }

    /// Whether the method starts from the behavior-cloned policy.
    pub fn uses_bc(self) -> bool {
        !matches!(
            self,
            Method::Untuned | Method::SelfPlayEto | Method::SelfPlayRft | Method::SelfPlayRftEto
        )
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataConfig {
    pub train: usize,
    pub seen_test: usize,
    pub unseen_test: usize,
    /// Seed that selects which instruction seeds make up each set.
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train: 300,
            seen_test: 60,
            unseen_test: 60,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub embed_dim: usize,
    pub window: usize,
    pub hidden: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            embed_dim: Architecture::DEFAULT_EMBED,
            window: Architecture::DEFAULT_WINDOW,
            hidden: Architecture::DEFAULT_HIDDEN,
        }
    }
}

impl ArchConfig {
    pub fn architecture(&self, vocab_size: usize) -> Architecture {
        Architecture {
            vocab_size,
            embed_dim: self.embed_dim,
            window: self.window,
            hidden: self.hidden,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BestOfNConfig {
    pub n: usize,
}

/// Everything a run needs. A persisted config reproduces its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvName,
    pub method: Method,
    pub seeds: Vec<u64>,
    pub data: DataConfig,
    pub arch: ArchConfig,
    pub sft: TrainConfig,
    pub eto: EtoConfig,
    pub rft: RftConfig,
    pub best_of_n: BestOfNConfig,
    pub pg: PgConfig,
    pub self_play: SelfPlayConfig,
    pub stepwise: StepwiseConfig,
}

/// Paper-scale values, kept for reference; they are far too small for a
/// from-scratch policy.
pub mod paper_scale {
    pub const SFT_LR: f64 = 1e-5;
    pub const DPO_LR: f64 = 1e-6;
    pub const STEPWISE_LR: f64 = 1e-7;
    pub const SFT_BATCH: usize = 64;
    pub const DPO_BATCH: usize = 32;
    pub const EPOCHS: usize = 3;
}

impl ExperimentConfig {
    /// Desk-scale defaults for `env`.
    pub fn defaults(env: EnvName, method: Method) -> Self {
        let spec = EnvSpec::new(env);
        let binary = spec.reward_kind == RewardKind::Binary;
        let beta = if binary { BETA_BINARY } else { BETA_DENSE };
        let sft = TrainConfig {
            epochs: 20,
            batch_size: 32,
            lr: 3e-3,
            ..TrainConfig::default()
        };
        let dpo = TrainConfig {
            epochs: 3,
            batch_size: 32,
            lr: 3e-4,
            ..TrainConfig::default()
        };
        Self {
            env,
            method,
            seeds: (0..5).collect(),
            data: DataConfig::default(),
            arch: ArchConfig::default(),
            sft,
            eto: EtoConfig {
                iterations: if binary { 1 } else { 2 },
                sft,
                dpo,
                beta,
                ..EtoConfig::default()
            },
            rft: RftConfig {
                sft: TrainConfig { epochs: 3, ..sft },
                ..RftConfig::default()
            },
            best_of_n: BestOfNConfig { n: 10 },
            pg: PgConfig {
                beta,
                ..PgConfig::default()
            },
            self_play: SelfPlayConfig {
                samples_per_instruction: 8,
                sft: TrainConfig { epochs: 3, ..sft },
                dpo,
                beta,
                ..SelfPlayConfig::default()
            },
            stepwise: StepwiseConfig {
                dpo: TrainConfig { lr: 1e-4, ..dpo },
                iterations: if binary { 1 } else { 2 },
                trajectory_beta: beta,
                ..StepwiseConfig::default()
            },
        }
    }

    /// Builds a config from environment defaults, an optional TOML or JSON
    /// document and `key.path=value` overrides, applied in that order.
    pub fn resolve(env: Option<EnvName>, method: Option<Method>, file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let user = match file {
            Some(p) => read_document(p)?,
            None => Value::Object(Default::default()),
        };
        let pick = |key: &str| user.get(key).and_then(Value::as_str).map(str::to_owned);
        let env = match env {
            Some(e) => e,
            None => pick("env")
                .ok_or_else(|| Error::Config("environment not given".into()))?
                .parse()?,
        };
        let method = match method {
            Some(m) => m,
            None => pick("method").map_or(Ok(Method::Eto), |m| m.parse())?,
        };
        let mut doc = serde_json::to_value(Self::defaults(env, method))?;
        check_keys(&doc, &user, "")?;
        merge(&mut doc, user);
        doc["env"] = Value::String(env.as_str().into());
        doc["method"] = Value::String(method.as_str().into());
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: Self = serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.data.train == 0 || self.data.seen_test == 0 {
            return Err(Error::Config("train and seen-test sets must be nonempty".into()));
        }
        if self.best_of_n.n == 0 {
            return Err(Error::Config("best_of_n.n must be at least 1".into()));
        }
        for t in [&self.sft, &self.eto.sft, &self.eto.dpo, &self.rft.sft, &self.stepwise.dpo, &self.self_play.sft, &self.self_play.dpo] {
            t.validate()?;
        }
        for (name, b) in [("eto.beta", self.eto.beta), ("stepwise.beta", self.stepwise.beta), ("self_play.beta", self.self_play.beta)] {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Hex digest of the canonical JSON form without the seed list, so a
    /// seed's run carries the same digest whichever sweep it belongs to.
    pub fn digest(&self) -> String {
        let mut doc = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(m) = &mut doc {
            m.remove("seeds");
        }
        hex16(&Sha256::digest(doc.to_string().as_bytes()))
    }
}

pub(crate) fn hex16(bytes: &[u8]) -> String {
    bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn read_document(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    if is_json {
        Ok(serde_json::from_str(&text)?)
    } else {
        let v: toml::Value = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::to_value(v).map_err(Error::from)
    }
}

/// Rejects keys of `user` that the defaults document does not have.
fn check_keys(defaults: &Value, user: &Value, prefix: &str) -> Result<()> {
    let (Value::Object(d), Value::Object(u)) = (defaults, user) else {
        return Ok(());
    };
    for (k, v) in u {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match d.get(k) {
            Some(dv) => check_keys(dv, v, &path)?,
            None => return Err(Error::Config(format!("unknown config key {path:?}"))),
        }
    }
    Ok(())
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, o) => *b = o,
    }
}

/// Applies `a.b.c=value`; the value is parsed as JSON when possible and
/// taken as a string otherwise.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = doc;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override path {path:?} crosses a non-table")))?;
        if !obj.contains_key(*key) {
            return Err(Error::Config(format!("unknown config key {path:?}")));
        }
        if i + 1 == keys.len() {
            obj.insert((*key).to_string(), value);
            return Ok(());
        }
        cur = obj.get_mut(*key).expect("checked above");
    }
    Ok(())
}
