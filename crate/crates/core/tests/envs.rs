use trajpref::envs::{EnvName, EnvSpec, INVALID};
use trajpref::trajectory::Split;
use trajpref::Error;

#[test]
fn oracle_experts_replay_to_full_reward() {
    for env in EnvName::ALL {
        let spec = EnvSpec::new(env);
        for split in [Split::Seen, Split::Unseen] {
            let base = spec.seeds(split).start;
            for s in 0..100 {
                let task = spec.generate_instruction(split, base + s).unwrap();
                let expert = spec.oracle_expert(&task).unwrap();
                assert_eq!(expert.reward, 1.0);
                expert.validate(&spec.vocab, spec.max_steps).unwrap();
                let replay = spec.verify(&expert).unwrap();
                assert!(replay.success, "{env} {split:?} {s}");
                assert!(expert.steps.last().unwrap().observation_tokens.is_none());
            }
        }
    }
}

#[test]
fn instruction_generation_is_deterministic() {
    for env in EnvName::ALL {
        let spec = EnvSpec::new(env);
        let a = spec.generate_instruction(Split::Seen, 42).unwrap();
        let b = spec.generate_instruction(Split::Seen, 42).unwrap();
        assert_eq!(a.instruction, b.instruction);
        assert!(matches!(spec.generate_instruction(Split::Seen, 2_000_000), Err(Error::Generation(_))));
        assert!(matches!(spec.generate_instruction(Split::Unseen, 3), Err(Error::Generation(_))));
    }
}

#[test]
fn records_round_trip() {
    for env in EnvName::ALL {
        let spec = EnvSpec::new(env);
        let task = spec.generate_instruction(Split::Unseen, 1_000_017).unwrap();
        let expert = spec.oracle_expert(&task).unwrap();
        let json = serde_json::to_string(&spec.to_record(&expert)).unwrap();
        let back = spec.from_record(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, expert);
    }
}

#[test]
fn tampered_reward_fails_replay() {
    let spec = EnvSpec::new(EnvName::ToyLab);
    let task = spec.generate_instruction(Split::Seen, 9).unwrap();
    let mut expert = spec.oracle_expert(&task).unwrap();
    expert.reward = 0.5;
    assert!(matches!(spec.verify(&expert), Err(Error::Replay(_))));
}

#[test]
fn unparseable_actions_observe_nothing_happened() {
    for env in EnvName::ALL {
        let spec = EnvSpec::new(env);
        let task = spec.generate_instruction(Split::Seen, 0).unwrap();
        let (mut state, _) = spec.reset(&task.instruction).unwrap();
        let junk = spec.vocab.tokenize(INVALID.join(" ").as_str()).unwrap();
        let out = spec.step(&mut state, &junk).unwrap();
        assert_eq!(spec.vocab.render(&out.observation), INVALID.join(" "));
        assert!(!out.done);
    }
}

#[test]
fn episodes_end_at_the_step_limit() {
    let spec = EnvSpec::new(EnvName::ToyShop).with_max_steps(3);
    let task = spec.generate_instruction(Split::Seen, 0).unwrap();
    let (mut state, _) = spec.reset(&task.instruction).unwrap();
    let junk = spec.vocab.tokenize("nothing").unwrap();
    for i in 0..3 {
        let out = spec.step(&mut state, &junk).unwrap();
        assert_eq!(out.done, i == 2);
    }
    assert!(matches!(spec.step(&mut state, &junk), Err(Error::Environment(_))));
    assert_eq!(spec.final_reward(&state, &task.goal).unwrap(), 0.0);
}

#[test]
fn foreign_instructions_are_rejected() {
    let shop = EnvSpec::new(EnvName::ToyShop);
    let lab = EnvSpec::new(EnvName::ToyLab);
    let task = lab.generate_instruction(Split::Seen, 0).unwrap();
    assert!(shop.reset(&task.instruction).is_err());
}
