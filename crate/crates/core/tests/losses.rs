use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trajpref::algorithms::{behavioral_cloning, supervised_finetune, TrainConfig};
use trajpref::envs::{EnvName, EnvSpec};
use trajpref::fixtures;
use trajpref::losses::{
    bt_preference_prob, dpo_loss, grad_check, log_sigmoid, preference_loss, sft_loss, sigmoid, stepwise_dpo_loss,
    AdamWConfig, DpoConfig, OptimizerState, PreparedPair,
};
use trajpref::policy::{Architecture, PolicyParams};
use trajpref::trajectory::{flatten, Split, TrajectoryPair};
use trajpref::Error;

fn tiny() -> (trajpref::vocab::Vocabulary, Architecture) {
    let v = fixtures::vocab();
    let a = fixtures::tiny_arch(&v);
    (v, a)
}

#[test]
fn dpo_at_reference_is_ln2() {
    let (vocab, arch) = tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let p = fixtures::random_params(arch, 1.0, &mut rng);
        let pairs: Vec<_> = (0..4).map(|i| fixtures::random_pair(&mut rng, i, 5)).collect();
        let cfg = DpoConfig::new(0.3, p.clone()).unwrap();
        let (loss, _) = dpo_loss(&p, &cfg, &pairs, &vocab).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-9);
    }
}

#[test]
fn closed_form_log_sigmoid() {
    let want_pos = (1.0 + (-2.0f64).exp()).ln();
    let want_neg = (1.0 + 2.0f64.exp()).ln();
    assert!((-log_sigmoid(2.0) - want_pos).abs() < 1e-12);
    assert!((-log_sigmoid(-2.0) - want_neg).abs() < 1e-12);
    assert!((-log_sigmoid(2.0) - 0.126_928_011_042_972_6).abs() < 1e-12);
    assert!((-log_sigmoid(-2.0) - 2.126_928_011_042_972_6).abs() < 1e-12);
    assert!(log_sigmoid(-800.0).is_finite());
    assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-9);
    assert_eq!(sigmoid(0.0), 0.5);
}

#[test]
fn dpo_rejects_misordered_pairs() {
    let (vocab, arch) = tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pair = fixtures::random_pair(&mut rng, 0, 3);
    let swapped = TrajectoryPair {
        instruction: pair.instruction.clone(),
        winner: pair.loser.clone(),
        loser: pair.winner.clone(),
    };
    let p = PolicyParams::zeros(arch);
    let cfg = DpoConfig::new(0.1, p.clone()).unwrap();
    assert!(matches!(dpo_loss(&p, &cfg, &[swapped], &vocab), Err(Error::Contract(_))));
    assert!(matches!(TrajectoryPair::new(pair.loser.clone(), pair.winner.clone()), Err(Error::Contract(_))));
    assert!(DpoConfig::new(0.0, p.clone()).is_err());
    assert!(matches!(dpo_loss(&p, &cfg, &[], &vocab), Err(Error::InvalidInput(_))));
}

#[test]
fn step_pair_with_identical_actions_is_rejected() {
    let (vocab, arch) = tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut sp = fixtures::random_step_pair(&mut rng, 0, 2);
    sp.loser_action = sp.winner_action.clone();
    let p = PolicyParams::zeros(arch);
    let cfg = DpoConfig::new(0.1, p.clone()).unwrap();
    assert!(matches!(stepwise_dpo_loss(&p, &cfg, &[sp], &vocab), Err(Error::Contract(_))));
}

#[test]
fn gradients_match_finite_differences() {
    let results = trajpref::harness::checks::check_losses(10, 1e-5, 200, 5).unwrap();
    for r in results {
        assert!(r.max_relative_error < 1e-4, "{}: {}", r.loss, r.max_relative_error);
    }
}

#[test]
fn behavioral_cloning_memorizes_one_trajectory() {
    let spec = EnvSpec::new(EnvName::ToyShop);
    let task = spec.generate_instruction(Split::Seen, 3).unwrap();
    let expert = spec.oracle_expert(&task).unwrap();
    let init = PolicyParams::init(Architecture::new(spec.vocab.len()), 0);
    let flat = flatten(&expert, &spec.vocab).unwrap();
    let (before, _) = sft_loss(&init, std::slice::from_ref(&flat)).unwrap();
    let cfg = TrainConfig { epochs: 200, batch_size: 1, lr: 3e-3, ..TrainConfig::default() };
    let trained = behavioral_cloning(&init, &[expert], &spec.vocab, &cfg, 0).unwrap();
    assert_eq!(trained.steps, 200);
    let (after, _) = sft_loss(&trained.params, &[flat]).unwrap();
    assert!(after < 0.1 * before, "loss {before} -> {after}");
}

#[test]
fn behavioral_cloning_requires_successful_experts() {
    let spec = EnvSpec::new(EnvName::ToyShop);
    let task = spec.generate_instruction(Split::Seen, 3).unwrap();
    let mut expert = spec.oracle_expert(&task).unwrap();
    let init = PolicyParams::zeros(Architecture::new(spec.vocab.len()));
    let cfg = TrainConfig::default();
    assert!(matches!(behavioral_cloning(&init, &[], &spec.vocab, &cfg, 0), Err(Error::InvalidInput(_))));
    expert.reward = 0.5;
    assert!(matches!(behavioral_cloning(&init, &[expert.clone()], &spec.vocab, &cfg, 0), Err(Error::Contract(_))));
    assert!(supervised_finetune(&init, &[expert], &spec.vocab, &cfg, 0).is_ok());
}

#[test]
fn non_finite_gradients_abort_training() {
    let spec = EnvSpec::new(EnvName::ToyShop);
    let task = spec.generate_instruction(Split::Seen, 3).unwrap();
    let expert = spec.oracle_expert(&task).unwrap();
    let init = PolicyParams::init(Architecture::new(spec.vocab.len()), 0);
    let cfg = TrainConfig { epochs: 2, batch_size: 1, lr: 1e300, warmup_fraction: 0.0, ..TrainConfig::default() };
    match supervised_finetune(&init, &[expert], &spec.vocab, &cfg, 0) {
        Err(Error::Aborted { last_good, .. }) => assert!(last_good.is_finite()),
        other => panic!("expected abort, got {other:?}"),
    }
}

#[test]
fn adamw_schedule() {
    let cfg = AdamWConfig::new(1e-3, 100);
    assert_eq!(cfg.warmup_steps(), 3);
    assert_eq!(cfg.lr_at(0), 0.0);
    assert!((cfg.lr_at(3) - 1e-3).abs() < 1e-15);
    assert!(cfg.lr_at(100).abs() < 1e-15);
    let mut theta = vec![1.0, -1.0];
    let mut opt = OptimizerState::new(AdamWConfig { warmup_fraction: 0.0, ..AdamWConfig::new(0.1, 10) }, 2);
    opt.step(&mut theta, &[2.0, -3.0]).unwrap();
    // First bias-corrected step moves each coordinate by lr against the sign.
    assert!((theta[0] - 0.9).abs() < 1e-6 && (theta[1] + 0.9).abs() < 1e-6);
    assert!(matches!(opt.step(&mut theta, &[f64::NAN, 0.0]), Err(Error::NonFinite(_))));
}

#[test]
fn grad_check_on_quadratic() {
    let arch = Architecture { vocab_size: 7, embed_dim: 1, window: 1, hidden: 1 };
    let p = PolicyParams::init(arch, 1);
    let analytic: Vec<f64> = p.theta.iter().map(|x| 2.0 * x).collect();
    let r = grad_check(&p, &analytic, 1e-5, 1000, 0, |q| Ok(q.theta.iter().map(|x| x * x).sum())).unwrap();
    assert_eq!(r.coordinates_checked, p.len());
    assert!(r.max_relative_error < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bt_is_symmetric(a in -5.0f64..5.0, b in -5.0f64..5.0) {
        prop_assert!((bt_preference_prob(a, b) + bt_preference_prob(b, a) - 1.0).abs() < 1e-12);
        prop_assert!((bt_preference_prob(a, b) - sigmoid(a - b)).abs() < 1e-12);
    }

    #[test]
    fn dpo_loss_decreases_with_margin(seed in any::<u64>(), beta in 0.05f64..2.0, d in 0.01f64..3.0) {
        // Raising the winner's logprob (and nothing else) lowers the loss.
        let (vocab, arch) = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = fixtures::random_params(arch, 0.5, &mut rng);
        let pair = fixtures::random_pair(&mut rng, 0, 3);
        let reference = fixtures::random_params(arch, 0.5, &mut rng);
        let mut item = PreparedPair::from_pair(&pair, &vocab, &reference).unwrap();
        let (l0, _) = preference_loss(&p, beta, std::slice::from_ref(&item)).unwrap();
        item.reference_margin -= d;
        let (l1, _) = preference_loss(&p, beta, std::slice::from_ref(&item)).unwrap();
        prop_assert!(l1 < l0);
        prop_assert!(l0 > 0.0 && l1 > 0.0);
    }

    #[test]
    fn dpo_matches_closed_form(seed in any::<u64>(), beta in 0.05f64..2.0) {
        let (vocab, arch) = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = fixtures::random_params(arch, 0.5, &mut rng);
        let r = fixtures::random_params(arch, 0.5, &mut rng);
        let pair = fixtures::random_pair(&mut rng, 0, 3);
        let (w, l) = (flatten(&pair.winner, &vocab).unwrap(), flatten(&pair.loser, &vocab).unwrap());
        let z = beta * ((p.trajectory_logprob(&w).unwrap() - r.trajectory_logprob(&w).unwrap())
            - (p.trajectory_logprob(&l).unwrap() - r.trajectory_logprob(&l).unwrap()));
        let cfg = DpoConfig::new(beta, r).unwrap();
        let (loss, _) = dpo_loss(&p, &cfg, &[pair], &vocab).unwrap();
        prop_assert!((loss - (1.0 + (-z).exp()).ln()).abs() < 1e-9);
    }

    #[test]
    fn gradient_is_linear_in_batch(seed in any::<u64>()) {
        // The batch gradient is the mean of per-item gradients.
        let (vocab, arch) = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = fixtures::random_params(arch, 0.5, &mut rng);
        let inst = fixtures::random_instruction(&mut rng, 0);
        let n = rng.random_range(2..5);
        let flats: Vec<_> = (0..n).map(|_| flatten(&fixtures::random_trajectory(&mut rng, &inst, 3), &vocab).unwrap()).collect();
        let (_, g) = sft_loss(&p, &flats).unwrap();
        let mut mean = vec![0.0; p.len()];
        for f in &flats {
            let (_, gi) = sft_loss(&p, std::slice::from_ref(f)).unwrap();
            for (m, x) in mean.iter_mut().zip(gi) {
                *m += x / n as f64;
            }
        }
        for (a, b) in g.iter().zip(&mean) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }
}
