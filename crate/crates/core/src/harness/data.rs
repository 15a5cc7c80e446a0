//! Dataset generation and loading.
//!
//! A data directory holds `instructions_{train,seen_test,unseen_test}.jsonl`,
//! `experts_train.jsonl` and `data.json` (environment and data config).

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::DataConfig;
use crate::envs::{EnvName, EnvSpec};
use crate::error::{Error, Result};
use crate::trajectory::{Instruction, Split, Trajectory, TrajectoryRecord};

pub const TRAIN: &str = "instructions_train.jsonl";
pub const SEEN_TEST: &str = "instructions_seen_test.jsonl";
pub const UNSEEN_TEST: &str = "instructions_unseen_test.jsonl";
pub const EXPERTS: &str = "experts_train.jsonl";
pub const MANIFEST: &str = "data.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub id: String,
    pub env: String,
    pub variation: Split,
    pub seed: u64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataManifest {
    pub env: EnvName,
    pub data: DataConfig,
    pub vocab_fingerprint: String,
}

/// In-memory dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub env: EnvName,
    pub train: Vec<Instruction>,
    pub seen_test: Vec<Instruction>,
    pub unseen_test: Vec<Instruction>,
    pub experts: Vec<Trajectory>,
}

fn pick_seeds(spec: &EnvSpec, split: Split, n: usize, seed: u64) -> Vec<u64> {
    let range = spec.seeds(split);
    let width = (range.end - range.start) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(crate::seed::derive(seed, split as u64));
    sample(&mut rng, width, n).into_iter().map(|i| range.start + i as u64).collect()
}

/// Builds the dataset in memory. Train and seen-test seeds are drawn as one
/// sample without replacement, so the sets are disjoint.
pub fn build(env: EnvName, cfg: &DataConfig) -> Result<Dataset> {
    let spec = EnvSpec::new(env);
    let seen = pick_seeds(&spec, Split::Seen, cfg.train + cfg.seen_test, cfg.seed);
    let unseen = pick_seeds(&spec, Split::Unseen, cfg.unseen_test, cfg.seed);
    let gen = |split, seeds: &[u64]| -> Result<Vec<crate::envs::Task>> {
        seeds.iter().map(|&s| spec.generate_instruction(split, s)).collect()
    };
    let train_tasks = gen(Split::Seen, &seen[..cfg.train])?;
    let experts = train_tasks
        .iter()
        .map(|t| spec.oracle_expert(t))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        env,
        train: train_tasks.into_iter().map(|t| t.instruction).collect(),
        seen_test: gen(Split::Seen, &seen[cfg.train..])?.into_iter().map(|t| t.instruction).collect(),
        unseen_test: gen(Split::Unseen, &unseen)?.into_iter().map(|t| t.instruction).collect(),
        experts,
    })
}

impl Dataset {
    /// Fails if any test instruction id also appears in the training set.
    pub fn check_disjoint(&self) -> Result<()> {
        let train: std::collections::HashSet<&str> = self.train.iter().map(|i| i.id.as_str()).collect();
        for i in self.seen_test.iter().chain(&self.unseen_test) {
            if train.contains(i.id.as_str()) {
                return Err(Error::InvalidInput(format!("test instruction {} is also a training instruction", i.id)));
            }
        }
        Ok(())
    }
}

fn instruction_record(spec: &EnvSpec, inst: &Instruction) -> Result<InstructionRecord> {
    let (_, variation, seed) = Instruction::parse_id(&inst.id)?;
    Ok(InstructionRecord {
        id: inst.id.clone(),
        env: spec.name.as_str().into(),
        variation,
        seed,
        text: spec.vocab.render(&inst.tokens),
    })
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::InvalidInput(format!("{}:{}: {e}", path.display(), n + 1)))?);
    }
    Ok(out)
}

/// Writes a dataset; refuses a non-empty directory unless `force`.
pub fn save(dir: &Path, data: &Dataset, cfg: &DataConfig, force: bool) -> Result<()> {
    if dir.exists() && fs::read_dir(dir)?.next().is_some() && !force {
        return Err(Error::Refused(format!("{} exists and is not empty; pass --force to overwrite", dir.display())));
    }
    fs::create_dir_all(dir)?;
    let spec = EnvSpec::new(data.env);
    for (name, set) in [(TRAIN, &data.train), (SEEN_TEST, &data.seen_test), (UNSEEN_TEST, &data.unseen_test)] {
        let recs = set.iter().map(|i| instruction_record(&spec, i)).collect::<Result<Vec<_>>>()?;
        write_jsonl(&dir.join(name), &recs)?;
    }
    let experts: Vec<TrajectoryRecord> = data.experts.iter().map(|t| spec.to_record(t)).collect();
    write_jsonl(&dir.join(EXPERTS), &experts)?;
    let manifest = DataManifest {
        env: data.env,
        data: cfg.clone(),
        vocab_fingerprint: format!("{:016x}", spec.vocab.fingerprint()),
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

fn load_instructions(spec: &EnvSpec, path: &Path) -> Result<Vec<Instruction>> {
    read_jsonl::<InstructionRecord>(path)?
        .into_iter()
        .map(|r| {
            let task = spec.generate_instruction(r.variation, r.seed)?;
            if task.instruction.id != r.id || spec.vocab.render(&task.instruction.tokens) != r.text {
                return Err(Error::Replay(format!("{}: stored instruction does not regenerate", r.id)));
            }
            Ok(task.instruction)
        })
        .collect()
}

/// Loads a dataset, regenerating every instruction and replaying every
/// expert trajectory.
pub fn load(dir: &Path) -> Result<(DataManifest, Dataset)> {
    let manifest: DataManifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)?;
    let spec = EnvSpec::new(manifest.env);
    if manifest.vocab_fingerprint != format!("{:016x}", spec.vocab.fingerprint()) {
        return Err(Error::InvalidInput("data was generated with a different vocabulary".into()));
    }
    let experts = read_jsonl::<TrajectoryRecord>(&dir.join(EXPERTS))?
        .iter()
        .map(|r| spec.from_record(r))
        .collect::<Result<Vec<_>>>()?;
    let data = Dataset {
        env: manifest.env,
        train: load_instructions(&spec, &dir.join(TRAIN))?,
        seen_test: load_instructions(&spec, &dir.join(SEEN_TEST))?,
        unseen_test: load_instructions(&spec, &dir.join(UNSEEN_TEST))?,
        experts,
    };
    data.check_disjoint()?;
    Ok((manifest, data))
}
