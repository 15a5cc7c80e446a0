//! Executes one configured method for every seed and persists the results.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::config::{ExperimentConfig, Method};
use super::data::{write_jsonl, Dataset};
use super::report::{curves_for, IterationMetrics, MetricsReport, SplitMetrics};
use crate::algorithms::{
    behavioral_cloning, best_of_n, eto_from_base, evaluate, mixture, pg_baseline, rft, score, self_play,
    stepwise, summarize, SelfPlayMode,
};
use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::policy::{checkpoint, PolicyParams};
use crate::seed;
use crate::trajectory::{Instruction, Trajectory};

pub const METRICS_FILE: &str = "metrics.json";
pub const TIMING_FILE: &str = "timing.json";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const LAST_GOOD_CHECKPOINT: &str = "last_good.ckpt";

/// Where one (method, seed) run writes its files.
pub fn run_dir(out: &Path, method: Method, seed: u64) -> PathBuf {
    out.join(method.as_str()).join(format!("seed-{seed}"))
}

pub fn init_params(cfg: &ExperimentConfig, spec: &EnvSpec, seed: u64) -> PolicyParams {
    PolicyParams::init(cfg.arch.architecture(spec.vocab.len()), seed::derive(seed, seed::label("init")))
}

fn bc_cache_key(cfg: &ExperimentConfig, seed: u64) -> String {
    let doc = serde_json::json!({
        "env": cfg.env, "data": cfg.data, "arch": cfg.arch, "sft": cfg.sft, "seed": seed,
    });
    super::config::hex16(&<sha2::Sha256 as sha2::Digest>::digest(doc.to_string().as_bytes()))
}

/// Behavior-cloned base policy, cached under `out/bc/` when `out` is given.
pub fn base_policy(cfg: &ExperimentConfig, spec: &EnvSpec, data: &Dataset, seed: u64, out: Option<&Path>) -> Result<PolicyParams> {
    let cache = out.map(|o| o.join("bc").join(format!("seed-{seed}-{}.ckpt", bc_cache_key(cfg, seed))));
    if let Some(path) = cache.as_ref().filter(|p| p.exists()) {
        return checkpoint::load(path, &spec.vocab);
    }
    let init = init_params(cfg, spec, seed);
    let trained = behavioral_cloning(&init, &data.experts, &spec.vocab, &cfg.sft, seed::derive(seed, seed::label("bc")))?;
    if let Some(path) = cache {
        fs::create_dir_all(path.parent().expect("cache path has a parent"))?;
        checkpoint::save(&path, &trained.params, &spec.vocab)?;
    }
    Ok(trained.params)
}

fn eval_both(params: &PolicyParams, spec: &EnvSpec, data: &Dataset) -> Result<(SplitMetrics, SplitMetrics)> {
    Ok((
        evaluate(params, spec, &data.seen_test)?.into(),
        evaluate(params, spec, &data.unseen_test)?.into(),
    ))
}

fn best_of_n_split(params: &PolicyParams, spec: &EnvSpec, insts: &[Instruction], n: usize, s: u64) -> Result<SplitMetrics> {
    let mut records = Vec::with_capacity(insts.len());
    for (i, inst) in insts.iter().enumerate() {
        let t = best_of_n(params, inst, spec, n, seed::derive(s, i as u64))?;
        records.push(score(spec, &t)?);
    }
    Ok(summarize(spec, records, 0).into())
}

/// Files written next to the metrics besides the final checkpoint.
#[derive(Default)]
struct Artifacts {
    trajectories: Vec<(String, Vec<Trajectory>)>,
}

struct Outcome {
    params: PolicyParams,
    seen: SplitMetrics,
    unseen: SplitMetrics,
    iterations: Vec<IterationMetrics>,
    notes: Vec<String>,
    artifacts: Artifacts,
}

fn execute(cfg: &ExperimentConfig, spec: &EnvSpec, data: &Dataset, seed: u64, out: Option<&Path>) -> Result<Outcome> {
    let ms = seed::derive(seed, seed::label(cfg.method.as_str()));
    let mut notes = Vec::new();
    let mut artifacts = Artifacts::default();
    let start = if cfg.method.uses_bc() {
        base_policy(cfg, spec, data, seed, out)?
    } else {
        init_params(cfg, spec, seed)
    };
    let (seen0, unseen0) = eval_both(&start, spec, data)?;
    let phase0 = if cfg.method.uses_bc() { "bc" } else { "untuned" };
    let mut iterations = vec![IterationMetrics::new(0, phase0, &seen0, &unseen0)];
    let finish = |params: PolicyParams, iterations, notes, artifacts| -> Result<Outcome> {
        let (seen, unseen) = eval_both(&params, spec, data)?;
        Ok(Outcome { params, seen, unseen, iterations, notes, artifacts })
    };
    match cfg.method {
        Method::Untuned | Method::Sft => Ok(Outcome {
            params: start,
            seen: seen0,
            unseen: unseen0,
            iterations,
            notes,
            artifacts,
        }),
        Method::Eto => {
            let mut ecfg = cfg.eto.clone();
            ecfg.sft = cfg.sft;
            let res = eto_from_base(&start, &data.experts, spec, &ecfg, ms)?;
            let mut last = None;
            for (i, it) in res.iterations.iter().enumerate() {
                let (s, u) = eval_both(&it.params, spec, data)?;
                let mut m = IterationMetrics::new(i + 1, "eto", &s, &u);
                m.pairs = Some(it.pairs);
                m.first_batch_loss = Some(it.first_batch_loss);
                iterations.push(m);
                artifacts.trajectories.push((format!("rollouts_iter{}.jsonl", i + 1), it.rollouts.clone()));
                notes.extend(it.skipped.iter().map(|s| format!("iteration {}: skipped {s}", i + 1)));
                last = Some((s, u));
            }
            if let Some(it) = res.stopped_early {
                notes.push(format!("iteration {it} produced no pairs; stopped early"));
            }
            let params = res.final_params().clone();
            match last {
                Some((seen, unseen)) => Ok(Outcome { params, seen, unseen, iterations, notes, artifacts }),
                None => Ok(Outcome { params, seen: seen0, unseen: unseen0, iterations, notes, artifacts }),
            }
        }
        Method::Rft => {
            let res = rft(&start, &data.experts, spec, &cfg.rft, ms)?;
            notes.push(format!("accepted {} sampled trajectories at threshold {}", res.accepted, res.threshold));
            artifacts.trajectories.push(("augmented.jsonl".into(), res.augmented));
            let (s, u) = eval_both(&res.params, spec, data)?;
            iterations.push(IterationMetrics::new(1, "rft", &s, &u));
            Ok(Outcome { params: res.params, seen: s, unseen: u, iterations, notes, artifacts })
        }
        Method::BestOfN => {
            let n = cfg.best_of_n.n;
            let seen = best_of_n_split(&start, spec, &data.seen_test, n, seed::derive(ms, 0))?;
            let unseen = best_of_n_split(&start, spec, &data.unseen_test, n, seed::derive(ms, 1))?;
            iterations.push(IterationMetrics::new(1, "best_of_n", &seen, &unseen));
            Ok(Outcome { params: start, seen, unseen, iterations, notes, artifacts })
        }
        Method::Pg => {
            let res = pg_baseline(&start, &data.train, spec, &cfg.pg, ms)?;
            let max_norm = res.grad_norms.iter().copied().fold(0.0, f64::max);
            notes.push(format!("{} updates, max pre-clip gradient norm {max_norm}", res.grad_norms.len()));
            let mut out = finish(res.params, iterations, notes, artifacts)?;
            out.iterations.push(IterationMetrics::new(1, "pg", &out.seen, &out.unseen));
            Ok(out)
        }
        Method::SelfPlayEto | Method::SelfPlayRft | Method::SelfPlayRftEto => {
            let mode = match cfg.method {
                Method::SelfPlayEto => SelfPlayMode::EtoOnly,
                Method::SelfPlayRft => SelfPlayMode::RftOnly,
                _ => SelfPlayMode::RftThenEto,
            };
            let res = self_play(&start, &data.train, spec, &cfg.self_play, mode, ms)?;
            notes.push(format!("accepted {} samples, {} pairs", res.accepted, res.pairs));
            notes.extend(res.notes);
            let mut out = finish(res.params, iterations, notes, artifacts)?;
            out.iterations.push(IterationMetrics::new(1, cfg.method.as_str(), &out.seen, &out.unseen));
            Ok(out)
        }
        Method::Stepwise | Method::Mixture => {
            let res = if cfg.method == Method::Stepwise {
                stepwise(&start, &data.experts, spec, &cfg.stepwise, ms)?
            } else {
                mixture(&start, &data.experts, spec, &cfg.stepwise, ms)?
            };
            for (i, it) in res.iterations.iter().enumerate() {
                let (s, u) = eval_both(&it.params, spec, data)?;
                let mut m = IterationMetrics::new(i + 1, cfg.method.as_str(), &s, &u);
                m.pairs = Some(it.step_pairs + it.trajectory_pairs);
                m.first_batch_loss = it.first_batch_loss;
                iterations.push(m);
            }
            if res.iterations.len() < cfg.stepwise.iterations {
                notes.push(format!("stopped after {} iterations: no pairs", res.iterations.len()));
            }
            finish(res.final_params().clone(), iterations, notes, artifacts)
        }
    }
}

#[derive(Serialize)]
struct Timing {
    wall_clock_secs: f64,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Runs the configured method for one seed.
pub fn run_seed(cfg: &ExperimentConfig, data: &Dataset, seed: u64, out: Option<&Path>) -> Result<MetricsReport> {
    if data.env != cfg.env {
        return Err(Error::Config(format!("data is for {} but the config targets {}", data.env, cfg.env)));
    }
    data.check_disjoint()?;
    let spec = EnvSpec::new(cfg.env);
    let t0 = Instant::now();
    let dir = out.map(|o| run_dir(o, cfg.method, seed));
    if let Some(d) = &dir {
        fs::create_dir_all(d)?;
    }
    let outcome = match execute(cfg, &spec, data, seed, out) {
        Ok(o) => o,
        Err(Error::Aborted { message, last_good }) => {
            if let Some(d) = &dir {
                checkpoint::save(&d.join(LAST_GOOD_CHECKPOINT), &last_good, &spec.vocab)?;
            }
            return Err(Error::Aborted { message, last_good });
        }
        Err(e) => return Err(e),
    };
    let report = MetricsReport {
        env: cfg.env,
        method: cfg.method,
        seed,
        config_digest: cfg.digest(),
        curves: curves_for(cfg.env, &outcome.seen),
        seen: outcome.seen,
        unseen: outcome.unseen,
        iterations: outcome.iterations,
        notes: outcome.notes,
        wall_clock_secs: t0.elapsed().as_secs_f64(),
    };
    if let Some(d) = &dir {
        write_json(&d.join("config.json"), cfg)?;
        checkpoint::save(&d.join(FINAL_CHECKPOINT), &outcome.params, &spec.vocab)?;
        for (name, trajs) in &outcome.artifacts.trajectories {
            let recs: Vec<_> = trajs.iter().map(|t| spec.to_record(t)).collect();
            write_jsonl(&d.join(name), &recs)?;
        }
        write_json(&d.join(METRICS_FILE), &report)?;
        write_json(&d.join(TIMING_FILE), &Timing { wall_clock_secs: report.wall_clock_secs })?;
    }
    Ok(report)
}

/// Runs every configured seed in order.
pub fn run(cfg: &ExperimentConfig, data: &Dataset, out: Option<&Path>) -> Result<Vec<MetricsReport>> {
    cfg.seeds.iter().map(|&s| run_seed(cfg, data, s, out)).collect()
}

/// Greedy evaluation of a saved checkpoint on both test splits.
pub fn evaluate_checkpoint(path: &Path, data: &Dataset) -> Result<(SplitMetrics, SplitMetrics)> {
    let spec = EnvSpec::new(data.env);
    let params = checkpoint::load(path, &spec.vocab)?;
    eval_both(&params, &spec, data)
}
