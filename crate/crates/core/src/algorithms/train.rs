//! Shared minibatch training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{AdamWConfig, OptimizerState};
use crate::policy::PolicyParams;
use crate::seed;

/// Epoch/batch/optimizer settings for one training phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub warmup_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 3,
            batch_size: 32,
            lr: 1e-3,
            weight_decay: 0.0,
            warmup_fraction: 0.03,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} invalid", self.lr)));
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config("warmup fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn steps_for(&self, items: usize) -> usize {
        self.epochs * items.div_ceil(self.batch_size)
    }

    pub fn optimizer(&self, total_steps: usize) -> AdamWConfig {
        AdamWConfig {
            weight_decay: self.weight_decay,
            warmup_fraction: self.warmup_fraction,
            ..AdamWConfig::new(self.lr, total_steps)
        }
    }
}

/// Result of a training phase.
#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub params: PolicyParams,
    /// Mean batch loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Loss of the very first batch, evaluated before any update.
    pub first_batch_loss: Option<f64>,
    pub steps: usize,
}

/// One batch: item indices into the dataset.
pub(crate) type Batch = Vec<usize>;

/// Shuffled batches for every epoch.
pub(crate) fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Batch> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed::derive(seed, epoch as u64)));
    idx.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Runs AdamW over a precomputed batch schedule. `loss` adds the batch
/// gradient into its buffer and returns the batch loss.
pub(crate) fn run_schedule<F>(
    init: &PolicyParams,
    cfg: &TrainConfig,
    schedule: &[Vec<Batch>],
    mut loss: F,
) -> Result<Trained>
where
    F: FnMut(&PolicyParams, usize, &Batch, &mut [f64]) -> Result<f64>,
{
    cfg.validate()?;
    let total: usize = schedule.iter().map(Vec::len).sum();
    let mut opt = OptimizerState::new(cfg.optimizer(total), init.len());
    let mut params = init.clone();
    let mut grad = vec![0.0; init.len()];
    let mut out = Trained {
        params: init.clone(),
        epoch_losses: Vec::with_capacity(schedule.len()),
        first_batch_loss: None,
        steps: 0,
    };
    for (epoch, batches) in schedule.iter().enumerate() {
        let mut sum = 0.0;
        for batch in batches {
            grad.fill(0.0);
            let abort = |message: String, last: &PolicyParams| Error::Aborted {
                message,
                last_good: Box::new(last.clone()),
            };
            let l = match loss(&params, epoch, batch, &mut grad) {
                Ok(l) => l,
                Err(Error::NonFinite(m)) => return Err(abort(m, &params)),
                Err(e) => return Err(e),
            };
            if !l.is_finite() {
                return Err(abort(format!("loss {l} at step {}", out.steps), &params));
            }
            out.first_batch_loss.get_or_insert(l);
            let backup = params.theta.clone();
            if let Err(e) = opt.step(&mut params.theta, &grad) {
                params.theta = backup;
                return Err(abort(e.to_string(), &params));
            }
            if !params.is_finite() {
                params.theta = backup;
                return Err(abort(format!("non-finite parameters after step {}", out.steps), &params));
            }
            sum += l;
            out.steps += 1;
        }
        out.epoch_losses.push(if batches.is_empty() { 0.0 } else { sum / batches.len() as f64 });
    }
    out.params = params;
    Ok(out)
}
