//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Runs write under `$TRAJPREF_OUTPUT_ROOT/acceptance` when that variable is
//! set and into a temporary directory otherwise.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trajpref::envs::{EnvName, EnvSpec};
use trajpref::fixtures;
use trajpref::harness::config::{ExperimentConfig, Method};
use trajpref::harness::data::{self, Dataset};
use trajpref::harness::report::MetricsReport;
use trajpref::harness::run::{base_policy, run_dir, run_seed, METRICS_FILE};
use trajpref::harness::{checks, tables};
use trajpref::losses::{dpo_loss, log_sigmoid, DpoConfig};
use trajpref::policy::{log_softmax, rollout, PolicyParams, RolloutConfig};
use trajpref::seed;
use trajpref::trajectory::{flatten, pair_from_rollout, Trajectory, TrajectoryPair, TrajectoryRecord};
use trajpref::vocab::{ACTION_START, INSTRUCTION_START, OBSERVATION_START};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const IDENTITY_TOL: f64 = 1e-9;
const GRAD_EPSILON: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;
const GRAD_FIXTURES: usize = 100;
const MASK_FIXTURES: usize = 1_000;
const PAIR_FIXTURES: usize = 1_000;
const BC_GAIN: f64 = 0.3;
const BEST_OF_N: usize = 10;

struct Suite {
    out: PathBuf,
    data: BTreeMap<EnvName, Dataset>,
    reports: BTreeMap<(EnvName, Method), Vec<MetricsReport>>,
    failures: usize,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn seen(rs: &[MetricsReport]) -> Vec<f64> {
    rs.iter().map(|r| r.seen.average_reward).collect()
}

fn unseen(rs: &[MetricsReport]) -> Vec<f64> {
    rs.iter().map(|r| r.unseen.average_reward).collect()
}

fn fmt_all(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ")
}

impl Suite {
    fn report(&mut self, id: u8, name: &str, pass: bool, elapsed: Duration, detail: &str) {
        let tag = if pass { "PASS" } else { "FAIL" };
        if !pass {
            self.failures += 1;
        }
        println!("{tag} {id:>2} {name} ({:.1}s): {detail}", elapsed.as_secs_f64());
    }

    fn dataset(&mut self, env: EnvName) -> &Dataset {
        self.data.entry(env).or_insert_with(|| {
            let cfg = ExperimentConfig::defaults(env, Method::Sft);
            data::build(env, &cfg.data).expect("dataset builds")
        })
    }

    fn runs(&mut self, env: EnvName, method: Method) -> Vec<MetricsReport> {
        if let Some(r) = self.reports.get(&(env, method)) {
            return r.clone();
        }
        let mut cfg = ExperimentConfig::defaults(env, method);
        cfg.seeds = SEEDS.to_vec();
        let ds = self.dataset(env).clone();
        let out = self.out.join(env.as_str());
        let rs: Vec<MetricsReport> = cfg
            .seeds
            .iter()
            .map(|&s| run_seed(&cfg, &ds, s, Some(&out)).unwrap_or_else(|e| panic!("{env} {method} seed {s}: {e}")))
            .collect();
        eprintln!(
            "  {env} {method}: seen [{}] unseen [{}]",
            fmt_all(&seen(&rs)),
            fmt_all(&unseen(&rs))
        );
        self.reports.insert((env, method), rs.clone());
        rs
    }
}

fn dpo_identity(suite: &mut Suite) {
    let t = Instant::now();
    let vocab = fixtures::vocab();
    let arch = fixtures::tiny_arch(&vocab);
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for b in 0..200 {
        let p = fixtures::random_params(arch, 1.0, &mut rng);
        let n = rng.random_range(1..=8);
        let pairs: Vec<TrajectoryPair> = (0..n).map(|i| fixtures::random_pair(&mut rng, (b * 10 + i) as u64, 6)).collect();
        let cfg = DpoConfig::new(rng.random_range(0.01..5.0), p.clone()).expect("beta positive");
        let (loss, _) = dpo_loss(&p, &cfg, &pairs, &vocab).expect("loss");
        worst = worst.max((loss - std::f64::consts::LN_2).abs());
    }
    let pos = (-log_sigmoid(2.0) - (1.0 + (-2.0f64).exp()).ln()).abs();
    let neg = (-log_sigmoid(-2.0) - (1.0 + 2.0f64.exp()).ln()).abs();
    let el = t.elapsed();
    let pass = worst < IDENTITY_TOL && pos < IDENTITY_TOL && neg < IDENTITY_TOL && el < Duration::from_secs(1);
    suite.report(
        1,
        "preference loss at the reference equals ln 2",
        pass,
        el,
        &format!("max |loss - ln2| {worst:.2e} over 200 batches; -log sig(+-2) errors {pos:.1e} {neg:.1e}"),
    );
}

fn gradient_oracle(suite: &mut Suite) {
    let t = Instant::now();
    let results = checks::check_losses(GRAD_FIXTURES, GRAD_EPSILON, trajpref::losses::DEFAULT_COORDINATES, 202).expect("checks run");
    let el = t.elapsed();
    let pass = results.iter().all(|r| r.max_relative_error < GRAD_TOL) && el < Duration::from_secs(120);
    let detail = results
        .iter()
        .map(|r| format!("{} {:.2e}", r.loss, r.max_relative_error))
        .collect::<Vec<_>>()
        .join(", ");
    suite.report(2, "analytic gradients match central differences", pass, el, &format!("{GRAD_FIXTURES} fixtures each; {detail}"));
}

/// Expected mask from the step structure, built without the library layout.
fn expected_mask(traj: &Trajectory) -> (Vec<u32>, Vec<bool>) {
    let mut ids = vec![INSTRUCTION_START];
    ids.extend(&traj.instruction.tokens);
    let mut mask = vec![false; ids.len()];
    for (j, s) in traj.steps.iter().enumerate() {
        ids.push(ACTION_START);
        mask.push(false);
        ids.extend(&s.action_tokens);
        mask.extend(std::iter::repeat_n(true, s.action_tokens.len()));
        if j + 1 < traj.steps.len() {
            let obs = s.observation_tokens.clone().unwrap_or_default();
            ids.push(OBSERVATION_START);
            ids.extend(&obs);
            mask.extend(std::iter::repeat_n(false, obs.len() + 1));
        }
    }
    (ids, mask)
}

fn masking(suite: &mut Suite) {
    let t = Instant::now();
    let vocab = fixtures::vocab();
    let arch = fixtures::tiny_arch(&vocab);
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut bad = Vec::new();
    for i in 0..MASK_FIXTURES {
        let p = fixtures::random_params(arch, 1.0, &mut rng);
        let inst = fixtures::random_instruction(&mut rng, i as u64);
        let traj = fixtures::random_trajectory(&mut rng, &inst, 6);
        let flat = flatten(&traj, &vocab).expect("fixture flattens");
        let (ids, mask) = expected_mask(&traj);
        if flat.token_ids != ids || flat.action_mask != mask || flat.masked_count() != traj.action_token_count() {
            bad.push(format!("layout {i}"));
            continue;
        }
        // Per-position contributions: zero off the mask, -log p on it.
        let mut oracle = 0.0;
        for (pos, (&tok, &m)) in ids.iter().zip(&mask).enumerate() {
            let contribution = if m {
                -log_softmax(&p.token_logits(&ids[..pos]).expect("logits"))[tok as usize]
            } else {
                0.0
            };
            oracle += contribution;
        }
        let lib = -p.trajectory_logprob(&flat).expect("logprob");
        if (lib - oracle).abs() > 1e-9 {
            bad.push(format!("sum {i}: {lib} vs {oracle}"));
        }
        let mut cleared = flat.clone();
        cleared.action_mask.fill(false);
        let g = p.trajectory_logprob_grad(&cleared).expect("grad");
        if p.trajectory_logprob(&cleared).expect("logprob") != 0.0 || g.iter().any(|&x| x != 0.0) {
            bad.push(format!("cleared {i}"));
        }
    }
    let el = t.elapsed();
    let pass = bad.is_empty() && el < Duration::from_secs(10);
    let detail = if bad.is_empty() {
        format!("{MASK_FIXTURES} trajectories; mask counts, layout and per-position sums agree")
    } else {
        format!("{} mismatches, first {}", bad.len(), bad[0])
    };
    suite.report(3, "loss counts only action tokens", pass, el, &detail);
}

fn brute_pair(expert: &Trajectory, rollout: &Trajectory) -> Option<(Trajectory, Trajectory)> {
    if expert.reward > rollout.reward {
        Some((expert.clone(), rollout.clone()))
    } else if rollout.reward > expert.reward {
        Some((rollout.clone(), expert.clone()))
    } else {
        None
    }
}

fn pairing(suite: &mut Suite) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut mismatches, mut ties, mut emitted, mut equal_emitted) = (0, 0, 0, 0);
    for i in 0..PAIR_FIXTURES {
        let inst = fixtures::random_instruction(&mut rng, i as u64);
        let mut expert = fixtures::random_trajectory(&mut rng, &inst, 5);
        if rng.random_bool(0.5) {
            expert.reward = 1.0;
        }
        let roll = fixtures::random_trajectory(&mut rng, &inst, 5);
        let got = pair_from_rollout(&expert, &roll).expect("same instruction");
        let want = brute_pair(&expert, &roll);
        if want.is_none() {
            ties += 1;
        }
        if let Some(p) = &got {
            emitted += 1;
            if p.winner.reward == p.loser.reward {
                equal_emitted += 1;
            }
        }
        if got.map(|p| (p.winner, p.loser)) != want {
            mismatches += 1;
        }
    }
    let el = t.elapsed();
    let pass = mismatches == 0 && equal_emitted == 0 && el < Duration::from_secs(10);
    suite.report(
        4,
        "pair construction matches brute force",
        pass,
        el,
        &format!("{PAIR_FIXTURES} fixtures, {emitted} pairs, {ties} ties dropped, {mismatches} mismatches, {equal_emitted} equal-reward pairs"),
    );
}

fn bc_gain(suite: &mut Suite) {
    let t = Instant::now();
    let untuned = suite.runs(EnvName::ToyShop, Method::Untuned);
    let sft = suite.runs(EnvName::ToyShop, Method::Sft);
    let gains: Vec<f64> = sft.iter().zip(&untuned).map(|(s, u)| s.seen.average_reward - u.seen.average_reward).collect();
    let el = t.elapsed();
    let pass = gains.iter().all(|&g| g >= BC_GAIN) && el < Duration::from_secs(600);
    suite.report(6, "behavioral cloning beats the untuned policy (toyshop)", pass, el, &format!("gains per seed [{}]", fmt_all(&gains)));
}

fn eto_ordering(suite: &mut Suite) {
    let t = Instant::now();
    let (mut pass, mut parts) = (true, Vec::new());
    for env in [EnvName::ToyShop, EnvName::ToyLab] {
        let s = seen(&suite.runs(env, Method::Sft));
        let e = seen(&suite.runs(env, Method::Eto));
        let wins = e.iter().zip(&s).filter(|(a, b)| a >= b).count();
        pass &= wins >= 4 && mean(&e) > mean(&s);
        parts.push(format!("{env}: eto >= sft on {wins}/5 seeds, mean seen {:.4} vs {:.4}", mean(&e), mean(&s)));
    }
    let el = t.elapsed();
    suite.report(
        7,
        "trajectory preference training beats cloning",
        pass && el < Duration::from_secs(3600),
        el,
        &parts.join("; "),
    );
}

fn replay_soundness(suite: &mut Suite) {
    let t = Instant::now();
    let (mut checked, mut bad) = (0usize, Vec::new());
    for env in [EnvName::ToyShop, EnvName::ToyLab] {
        let spec = EnvSpec::new(env);
        for &s in &SEEDS {
            let dir = run_dir(&suite.out.join(env.as_str()), Method::Eto, s);
            let mut files: Vec<PathBuf> = fs::read_dir(&dir)
                .map(|rd| rd.filter_map(|e| e.ok().map(|e| e.path())).collect())
                .unwrap_or_default();
            files.retain(|p| p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("rollouts_iter")));
            if files.is_empty() {
                bad.push(format!("{env} seed {s}: no rollout files"));
            }
            for f in files {
                let recs: Vec<TrajectoryRecord> = data::read_jsonl(&f).expect("rollout file parses");
                for r in recs {
                    checked += 1;
                    match spec.from_record(&r).and_then(|t| spec.replay(&t)) {
                        Ok(o) if o.reward == r.reward => {}
                        Ok(o) => bad.push(format!("{}: replayed {} stored {}", r.instruction_id, o.reward, r.reward)),
                        Err(e) => bad.push(format!("{}: {e}", r.instruction_id)),
                    }
                }
            }
        }
    }
    let el = t.elapsed();
    let detail = match bad.first() {
        None => format!("{checked} written trajectories replay to their stored reward"),
        Some(b) => format!("{} failures of {checked}, first {b}", bad.len()),
    };
    suite.report(5, "written trajectories replay exactly", bad.is_empty() && checked > 0, el, &detail);
}

fn unseen_generalization(suite: &mut Suite) {
    let t = Instant::now();
    let sft = unseen(&suite.runs(EnvName::ToyLab, Method::Sft));
    let eto = unseen(&suite.runs(EnvName::ToyLab, Method::Eto));
    suite.report(
        8,
        "unseen toylab reward does not drop",
        mean(&eto) >= mean(&sft),
        t.elapsed(),
        &format!("mean unseen eto {:.4} vs sft {:.4}", mean(&eto), mean(&sft)),
    );
}

fn best_of_n(suite: &mut Suite) {
    let t = Instant::now();
    let sft = suite.runs(EnvName::ToyShop, Method::Sft);
    let cfg = ExperimentConfig::defaults(EnvName::ToyShop, Method::BestOfN);
    assert_eq!(cfg.best_of_n.n, BEST_OF_N);
    let bon = suite.runs(EnvName::ToyShop, Method::BestOfN);
    let (greedy, best) = (seen(&sft), seen(&bon));
    let el = t.elapsed();
    suite.report(
        9,
        "best-of-10 sampling is at least greedy (toyshop)",
        mean(&best) >= mean(&greedy) && el < Duration::from_secs(600),
        el,
        &format!(
            "mean seen best-of-{BEST_OF_N} {:.4} vs greedy {:.4}; unseen {:.4} vs {:.4} (reported)",
            mean(&best),
            mean(&greedy),
            mean(&unseen(&bon)),
            mean(&unseen(&sft))
        ),
    );
}

/// Regenerates every RFT sample and filters it by brute force.
fn rft_expected(cfg: &ExperimentConfig, spec: &EnvSpec, ds: &Dataset, base: &PolicyParams, s: u64) -> Vec<Trajectory> {
    let ms = seed::derive(s, seed::label(Method::Rft.as_str()));
    let stream = seed::derive(ms, seed::label("rft-sample"));
    let tau = cfg.rft.threshold.unwrap_or_else(|| trajpref::algorithms::default_threshold(spec));
    let mut out = ds.experts.clone();
    for (i, e) in ds.experts.iter().enumerate() {
        for j in 0..cfg.rft.samples_per_instruction {
            let rc = RolloutConfig::sampled(cfg.rft.temperature, seed::derive_path(stream, &[i as u64, j as u64]));
            let t = rollout(base, spec, &e.instruction, &rc).expect("rollout");
            if t.reward >= tau {
                out.push(t);
            }
        }
    }
    out
}

fn rft(suite: &mut Suite) {
    let t = Instant::now();
    let sft = seen(&suite.runs(EnvName::ToyShop, Method::Sft));
    let rft = suite.runs(EnvName::ToyShop, Method::Rft);
    let cfg = ExperimentConfig::defaults(EnvName::ToyShop, Method::Rft);
    let spec = EnvSpec::new(EnvName::ToyShop);
    let ds = suite.dataset(EnvName::ToyShop).clone();
    let out = suite.out.join("toyshop");
    let mut set_ok = true;
    let mut sizes = Vec::new();
    for &s in &SEEDS {
        let base = base_policy(&cfg, &spec, &ds, s, Some(&out)).expect("cached base policy");
        let expected = rft_expected(&cfg, &spec, &ds, &base, s);
        let path = run_dir(&out, Method::Rft, s).join("augmented.jsonl");
        let recs: Vec<TrajectoryRecord> = data::read_jsonl(&path).expect("augmented set");
        let written: Vec<Trajectory> = recs.iter().map(|r| spec.from_record(r).expect("record")).collect();
        set_ok &= written == expected;
        sizes.push(format!("{}+{}", ds.experts.len(), written.len() - ds.experts.len()));
    }
    let r = seen(&rft);
    let el = t.elapsed();
    suite.report(
        10,
        "rejection-sampling set is exact and beats cloning (toyshop)",
        set_ok && mean(&r) >= mean(&sft) && el < Duration::from_secs(1200),
        el,
        &format!(
            "sets {} [{}]; mean seen rft {:.4} vs sft {:.4}",
            if set_ok { "exact" } else { "DIFFER" },
            sizes.join(" "),
            mean(&r),
            mean(&sft)
        ),
    );
}

fn self_play(suite: &mut Suite) {
    let t = Instant::now();
    let untuned = seen(&suite.runs(EnvName::ToyShop, Method::Untuned));
    let rft_only = seen(&suite.runs(EnvName::ToyShop, Method::SelfPlayRft));
    let rft_eto = seen(&suite.runs(EnvName::ToyShop, Method::SelfPlayRftEto));
    let eto_only = seen(&suite.runs(EnvName::ToyShop, Method::SelfPlayEto));
    let el = t.elapsed();
    let (u, r, re, e) = (mean(&untuned), mean(&rft_only), mean(&rft_eto), mean(&eto_only));
    suite.report(
        11,
        "self-play without cloning orders rft+eto >= rft >= untuned (toyshop)",
        re >= r && r >= u && el < Duration::from_secs(1800),
        el,
        &format!("means rft_then_eto {re:.4}, rft_only {r:.4}, untuned {u:.4}; eto_only {e:.4} (reported)"),
    );
}

fn determinism(suite: &mut Suite) {
    let t = Instant::now();
    let mut cfg = ExperimentConfig::defaults(EnvName::ToyShop, Method::Eto);
    cfg.seeds = vec![0];
    let ds = suite.dataset(EnvName::ToyShop).clone();
    let first = run_dir(&suite.out.join("toyshop"), Method::Eto, 0).join(METRICS_FILE);
    if !first.exists() {
        suite.runs(EnvName::ToyShop, Method::Eto);
    }
    let rerun_root = suite.out.join("rerun");
    run_seed(&cfg, &ds, 0, Some(&rerun_root)).expect("rerun");
    let a = fs::read(&first).expect("first metrics");
    let b = fs::read(run_dir(&rerun_root, Method::Eto, 0).join(METRICS_FILE)).expect("rerun metrics");
    suite.report(
        12,
        "reruns produce identical metrics documents",
        a == b,
        t.elapsed(),
        &format!("toyshop eto seed 0, {} bytes, fresh output directory", a.len()),
    );
}

fn efficiency(suite: &mut Suite) {
    let t = Instant::now();
    let mut reports = suite.runs(EnvName::ToyLab, Method::Sft);
    reports.extend(suite.runs(EnvName::ToyLab, Method::Eto));
    let out = suite.out.join("tables-toylab");
    let mut problems = Vec::new();
    for r in &reports {
        if r.curves.len() != r.seen.records.len() {
            problems.push(format!("{} seed {}: {} curves", r.method, r.seed, r.curves.len()));
        }
        for c in &r.curves {
            if c.rewards.windows(2).any(|w| w[1] < w[0]) {
                problems.push(format!("{} {} decreases", r.method, c.instruction_id));
            }
        }
    }
    if let Err(e) = tables::emit_tables(&reports, &out) {
        problems.push(format!("emit: {e}"));
    }
    let seen_ids: Vec<&str> = reports[0].seen.records.iter().map(|r| r.instruction_id.as_str()).collect();
    for id in &seen_ids {
        let body = fs::read_to_string(out.join("curves").join(format!("{id}.csv"))).unwrap_or_default();
        let mut lines = body.lines();
        let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
        if header.len() != 1 + reports.len() || header[0] != "step" {
            problems.push(format!("{id}: header {header:?}"));
            continue;
        }
        let rows: Vec<Vec<f64>> = lines
            .map(|l| l.split(',').skip(1).map(|x| x.parse().unwrap_or(f64::NAN)).collect())
            .collect();
        for col in 0..reports.len() {
            if rows.windows(2).any(|w| !(w[1][col] >= w[0][col])) {
                problems.push(format!("{id}: column {} not non-decreasing", header[col + 1]));
            }
        }
    }
    let eff = fs::read_to_string(out.join("efficiency.csv")).unwrap_or_default();
    let medians: Vec<String> = eff.lines().skip(1).map(|l| l.replace(',', " ")).collect();
    let el = t.elapsed();
    let detail = match problems.first() {
        None => format!("{} curve files; median steps to half reward: {}", seen_ids.len(), medians.join("; ")),
        Some(p) => format!("{} problems, first {p}", problems.len()),
    };
    suite.report(13, "toylab reward-vs-step curves", problems.is_empty(), el, &detail);
}

fn output_dir() -> (PathBuf, Option<tempfile::TempDir>) {
    match std::env::var_os(trajpref::harness::OUTPUT_ROOT_ENV) {
        Some(root) => {
            let dir = Path::new(&root).join("acceptance");
            let _ = fs::remove_dir_all(&dir);
            (dir, None)
        }
        None => {
            let tmp = tempfile::tempdir().expect("temporary directory");
            (tmp.path().to_path_buf(), Some(tmp))
        }
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let (out, _guard) = output_dir();
    let mut suite = Suite {
        out,
        data: BTreeMap::new(),
        reports: BTreeMap::new(),
        failures: 0,
    };
    dpo_identity(&mut suite);
    gradient_oracle(&mut suite);
    masking(&mut suite);
    pairing(&mut suite);
    bc_gain(&mut suite);
    eto_ordering(&mut suite);
    replay_soundness(&mut suite);
    unseen_generalization(&mut suite);
    best_of_n(&mut suite);
    rft(&mut suite);
    self_play(&mut suite);
    determinism(&mut suite);
    efficiency(&mut suite);
    println!(
        "{} of 13 criteria failed ({:.0}s total)",
        suite.failures,
        start.elapsed().as_secs_f64()
    );
    if suite.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
