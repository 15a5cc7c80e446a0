//! Command-line entry point: dataset generation, training runs, evaluation,
//! table emission and gradient checks.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use trajpref::envs::EnvName;
use trajpref::error::{Error, Result};
use trajpref::harness::config::{ExperimentConfig, Method};
use trajpref::harness::{checks, data, output_path, run, tables};

#[derive(Parser)]
#[command(name = "trajpref", version, about = "Learn text-environment agents from failure/success trajectory pairs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML or JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Environment (toyshop, toylab, toyhouse).
    #[arg(long)]
    env: Option<EnvName>,
    /// Training method.
    #[arg(long)]
    method: Option<Method>,
    /// Comma-separated seeds, overriding the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Config override `key.path=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(s) = &self.seeds {
            overrides.push(format!("seeds={}", serde_json::to_string(s)?));
        }
        ExperimentConfig::resolve(self.env, self.method, self.config.as_deref(), &overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate train/test instruction sets and expert trajectories.
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory (relative paths resolve under $TRAJPREF_OUTPUT_ROOT).
        #[arg(long)]
        out: PathBuf,
        /// Overwrite a non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Train and evaluate the configured method for every seed.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Directory written by gen-data.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedy evaluation of a checkpoint on both test splits.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Build CSV tables from metrics documents or directories containing them.
    EmitTables {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Finite-difference checks of the loss gradients on random fixtures.
    GradCheck {
        #[arg(long, default_value_t = 100)]
        fixtures: usize,
        #[arg(long, default_value_t = 1e-5)]
        epsilon: f64,
        #[arg(long, default_value_t = trajpref::losses::DEFAULT_COORDINATES)]
        coordinates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fail when any relative error reaches this value.
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

fn print(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { cfg, out, force } => {
            let cfg = cfg.resolve()?;
            let out = output_path(&out);
            let ds = data::build(cfg.env, &cfg.data)?;
            data::save(&out, &ds, &cfg.data, force)?;
            print(&json!({
                "env": cfg.env,
                "dir": out,
                "train": ds.train.len(),
                "seen_test": ds.seen_test.len(),
                "unseen_test": ds.unseen_test.len(),
                "experts": ds.experts.len(),
            }))
        }
        Command::Run { cfg, data: dir, out } => {
            let cfg = cfg.resolve()?;
            let (_, ds) = data::load(&output_path(&dir))?;
            let out = output_path(&out);
            for &seed in &cfg.seeds {
                let r = run::run_seed(&cfg, &ds, seed, Some(&out))?;
                print(&json!({
                    "method": r.method,
                    "seed": r.seed,
                    "seen_reward": r.seen.average_reward,
                    "unseen_reward": r.unseen.average_reward,
                    "seen_success": r.seen.success_rate,
                    "unseen_success": r.unseen.success_rate,
                    "dir": run::run_dir(&out, r.method, r.seed),
                }))?;
            }
            Ok(())
        }
        Command::Eval { checkpoint, data: dir } => {
            let (_, ds) = data::load(&output_path(&dir))?;
            let (seen, unseen) = run::evaluate_checkpoint(&output_path(&checkpoint), &ds)?;
            print(&json!({
                "env": ds.env,
                "seen": { "average_reward": seen.average_reward, "success_rate": seen.success_rate },
                "unseen": { "average_reward": unseen.average_reward, "success_rate": unseen.success_rate },
            }))
        }
        Command::EmitTables { out, inputs } => {
            let inputs: Vec<PathBuf> = inputs.iter().map(|p| output_path(p)).collect();
            let reports = tables::load_reports(&inputs)?;
            let files = tables::emit_tables(&reports, &output_path(&out))?;
            print(&json!({ "reports": reports.len(), "files": files }))
        }
        Command::GradCheck { fixtures, epsilon, coordinates, seed, tolerance } => {
            let results = checks::check_losses(fixtures, epsilon, coordinates, seed)?;
            print(&serde_json::to_value(&results)?)?;
            match results.iter().find(|r| !(r.max_relative_error < tolerance)) {
                Some(r) => Err(Error::Contract(format!(
                    "{} gradient relative error {} exceeds {tolerance}",
                    r.loss, r.max_relative_error
                ))),
                None => Ok(()),
            }
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": { "kind": e.kind(), "message": e.to_string() } }));
            ExitCode::FAILURE
        }
    }
}
