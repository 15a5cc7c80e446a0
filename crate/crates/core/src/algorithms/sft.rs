//! Behavioral cloning and plain supervised fine-tuning.

use super::train::{epoch_batches, run_schedule, TrainConfig, Trained};
use crate::error::{Error, Result};
use crate::losses::sft_loss_into;
use crate::policy::PolicyParams;
use crate::trajectory::{flatten, FlatSequence, Trajectory};
use crate::vocab::Vocabulary;

/// Minimizes the masked imitation loss on `data` for `cfg.epochs` epochs.
pub fn supervised_finetune(
    init: &PolicyParams,
    data: &[Trajectory],
    vocab: &Vocabulary,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Trained> {
    let flats = data
        .iter()
        .map(|t| flatten(t, vocab))
        .collect::<Result<Vec<FlatSequence>>>()?;
    let schedule: Vec<_> = (0..cfg.epochs)
        .map(|e| epoch_batches(flats.len(), cfg.batch_size, seed, e))
        .collect();
    run_schedule(init, cfg, &schedule, |p, _, batch, grad| {
        let items: Vec<FlatSequence> = batch.iter().map(|&i| flats[i].clone()).collect();
        sft_loss_into(p, &items, grad)
    })
}

/// Imitation on oracle expert trajectories, producing the base policy.
pub fn behavioral_cloning(
    init: &PolicyParams,
    experts: &[Trajectory],
    vocab: &Vocabulary,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Trained> {
    if experts.is_empty() {
        return Err(Error::InvalidInput("behavioral cloning needs at least one expert trajectory".into()));
    }
    if let Some(t) = experts.iter().find(|t| t.reward != 1.0) {
        return Err(Error::Contract(format!(
            "expert trajectory {} has reward {}",
            t.instruction.id, t.reward
        )));
    }
    supervised_finetune(init, experts, vocab, cfg, seed)
}
