//! Gradient checks of the training losses on random fixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::fixtures;
use crate::losses::{dpo_loss, grad_check, sft_loss, stepwise_dpo_loss, DpoConfig};
use crate::trajectory::flatten;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LossCheck {
    pub loss: &'static str,
    pub fixtures: usize,
    pub max_relative_error: f64,
}

/// Checks sft, trajectory-level and step-level preference gradients on
/// `n` random fixtures each.
pub fn check_losses(n: usize, epsilon: f64, coordinates: usize, seed: u64) -> Result<Vec<LossCheck>> {
    let vocab = fixtures::vocab();
    let arch = fixtures::tiny_arch(&vocab);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![
        LossCheck { loss: "sft", fixtures: n, max_relative_error: 0.0 },
        LossCheck { loss: "dpo", fixtures: n, max_relative_error: 0.0 },
        LossCheck { loss: "stepwise_dpo", fixtures: n, max_relative_error: 0.0 },
    ];
    for i in 0..n {
        let params = fixtures::random_params(arch, 0.5, &mut rng);
        let reference = fixtures::random_params(arch, 0.5, &mut rng);
        let beta = rng.random_range(0.05..1.0);
        let cfg = DpoConfig::new(beta, reference)?;
        let b = rng.random_range(1..=3);
        let check_seed: u64 = rng.random();

        let flats = (0..b)
            .map(|j| {
                let inst = fixtures::random_instruction(&mut rng, (i * 10 + j) as u64);
                flatten(&fixtures::random_trajectory(&mut rng, &inst, 4), &vocab)
            })
            .collect::<Result<Vec<_>>>()?;
        let (_, g) = sft_loss(&params, &flats)?;
        let r = grad_check(&params, &g, epsilon, coordinates, check_seed, |p| sft_loss(p, &flats).map(|x| x.0))?;
        out[0].max_relative_error = out[0].max_relative_error.max(r.max_relative_error);

        let pairs: Vec<_> = (0..b).map(|j| fixtures::random_pair(&mut rng, j as u64, 4)).collect();
        let (_, g) = dpo_loss(&params, &cfg, &pairs, &vocab)?;
        let r = grad_check(&params, &g, epsilon, coordinates, check_seed, |p| dpo_loss(p, &cfg, &pairs, &vocab).map(|x| x.0))?;
        out[1].max_relative_error = out[1].max_relative_error.max(r.max_relative_error);

        let steps: Vec<_> = (0..b).map(|j| fixtures::random_step_pair(&mut rng, j as u64, 3)).collect();
        let (_, g) = stepwise_dpo_loss(&params, &cfg, &steps, &vocab)?;
        let r = grad_check(&params, &g, epsilon, coordinates, check_seed, |p| {
            stepwise_dpo_loss(p, &cfg, &steps, &vocab).map(|x| x.0)
        })?;
        out[2].max_relative_error = out[2].max_relative_error.max(r.max_relative_error);
    }
    Ok(out)
}
