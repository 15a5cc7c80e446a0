//! Comma-separated tables and curve files from metrics documents.
//!
//! Outputs: `rewards.csv` and `success.csv` (method × split means),
//! `rewards_per_seed.csv`, `success_per_seed.csv`, `iterations.csv` (seed-mean
//! per iteration), `iterations_per_seed.csv`, `efficiency.csv` and, for
//! toylab, `curves/<instruction>.csv` with one column per method and seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::Method;
use super::report::MetricsReport;
use super::run::METRICS_FILE;
use crate::envs::EnvName;
use crate::error::{Error, Result};

/// Recursively collects `metrics.json` files under `root` in sorted order.
pub fn find_reports(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    if root.is_file() {
        out.push(root.to_path_buf());
        return Ok(out);
    }
    let mut entries: Vec<_> = fs::read_dir(root)?.collect::<std::io::Result<Vec<_>>>()?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            out.extend(find_reports(&p)?);
        } else if p.file_name().is_some_and(|n| n == METRICS_FILE) {
            out.push(p);
        }
    }
    Ok(out)
}

pub fn load_reports(paths: &[PathBuf]) -> Result<Vec<MetricsReport>> {
    let mut all = Vec::new();
    for p in paths {
        for f in find_reports(p)? {
            all.push(serde_json::from_str(&fs::read_to_string(&f)?)?);
        }
    }
    Ok(all)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 { xs[n / 2] } else { 0.5 * (xs[n / 2 - 1] + xs[n / 2]) })
}

/// First step (1-based) at which a curve reaches half its final value.
pub fn steps_to_half(curve: &[f64]) -> Option<usize> {
    let max = curve.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return None;
    }
    curve.iter().position(|&r| r >= 0.5 * max).map(|i| i + 1)
}

/// Carries the last value forward so every curve has `len` entries.
pub fn pad_curve(curve: &[f64], len: usize) -> Vec<f64> {
    let last = curve.last().copied().unwrap_or(0.0);
    (0..len).map(|i| curve.get(i).copied().unwrap_or(last)).collect()
}

fn fmt(x: f64) -> String {
    format!("{x:.6}")
}

/// Writes all tables for `reports` into `out` and returns the file paths.
pub fn emit_tables(reports: &[MetricsReport], out: &Path) -> Result<Vec<PathBuf>> {
    let Some(first) = reports.first() else {
        return Err(Error::InvalidInput("no metrics reports given".into()));
    };
    let env: EnvName = first.env;
    if let Some(r) = reports.iter().find(|r| r.env != env) {
        return Err(Error::Refused(format!("reports mix environments {} and {}", env, r.env)));
    }
    fs::create_dir_all(out)?;
    let mut by_method: BTreeMap<Method, Vec<&MetricsReport>> = BTreeMap::new();
    for r in reports {
        by_method.entry(r.method).or_default().push(r);
    }
    for rs in by_method.values_mut() {
        rs.sort_by_key(|r| r.seed);
    }
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let p = out.join(name);
        fs::write(&p, body)?;
        written.push(p);
        Ok(())
    };

    for (name, pick) in [
        ("rewards", (|s: &super::report::SplitMetrics| s.average_reward) as fn(&_) -> f64),
        ("success", |s: &super::report::SplitMetrics| s.success_rate),
    ] {
        let mut table = String::from("method,seen,unseen,seeds\n");
        let mut long = String::from("method,seed,seen,unseen\n");
        for (m, rs) in &by_method {
            let seen: Vec<f64> = rs.iter().map(|r| pick(&r.seen)).collect();
            let unseen: Vec<f64> = rs.iter().map(|r| pick(&r.unseen)).collect();
            writeln!(table, "{m},{},{},{}", fmt(mean(&seen)), fmt(mean(&unseen)), rs.len()).expect("string write");
            for r in rs {
                writeln!(long, "{m},{},{},{}", r.seed, fmt(pick(&r.seen)), fmt(pick(&r.unseen))).expect("string write");
            }
        }
        put(&format!("{name}.csv"), table)?;
        put(&format!("{name}_per_seed.csv"), long)?;
    }

    let mut iters = String::from("method,iteration,phase,seen_reward,unseen_reward,seen_success,unseen_success,seeds\n");
    let mut iters_long = String::from("method,seed,iteration,phase,seen_reward,unseen_reward,pairs,first_batch_loss\n");
    for (m, rs) in &by_method {
        let n_iter = rs.iter().map(|r| r.iterations.len()).min().unwrap_or(0);
        for i in 0..n_iter {
            let col = |f: fn(&super::report::IterationMetrics) -> f64| mean(&rs.iter().map(|r| f(&r.iterations[i])).collect::<Vec<_>>());
            writeln!(
                iters,
                "{m},{i},{},{},{},{},{},{}",
                rs[0].iterations[i].phase,
                fmt(col(|x| x.seen_reward)),
                fmt(col(|x| x.unseen_reward)),
                fmt(col(|x| x.seen_success)),
                fmt(col(|x| x.unseen_success)),
                rs.len()
            )
            .expect("string write");
        }
        for r in rs {
            for it in &r.iterations {
                writeln!(
                    iters_long,
                    "{m},{},{},{},{},{},{},{}",
                    r.seed,
                    it.iteration,
                    it.phase,
                    fmt(it.seen_reward),
                    fmt(it.unseen_reward),
                    it.pairs.map_or(String::new(), |p| p.to_string()),
                    it.first_batch_loss.map_or(String::new(), |l| format!("{l:.12}"))
                )
                .expect("string write");
            }
        }
    }
    put("iterations.csv", iters)?;
    put("iterations_per_seed.csv", iters_long)?;

    if env == EnvName::ToyLab {
        let mut eff = String::from("method,median_steps_to_half_max,episodes_with_reward\n");
        // instruction -> column label -> curve
        let mut curves: BTreeMap<&str, Vec<(String, &[f64])>> = BTreeMap::new();
        for (m, rs) in &by_method {
            let mut steps = Vec::new();
            for r in rs {
                for c in &r.curves {
                    if let Some(s) = steps_to_half(&c.rewards) {
                        steps.push(s as f64);
                    }
                    curves.entry(&c.instruction_id).or_default().push((format!("{m}_seed{}", r.seed), &c.rewards));
                }
            }
            let n = steps.len();
            let med = median(steps).map_or(String::new(), fmt);
            writeln!(eff, "{m},{med},{n}").expect("string write");
        }
        put("efficiency.csv", eff)?;
        let dir = out.join("curves");
        fs::create_dir_all(&dir)?;
        for (inst, cols) in curves {
            let len = cols.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
            let mut body = String::from("step");
            for (label, _) in &cols {
                write!(body, ",{label}").expect("string write");
            }
            body.push('\n');
            let padded: Vec<Vec<f64>> = cols.iter().map(|(_, c)| pad_curve(c, len)).collect();
            for step in 0..len {
                write!(body, "{}", step + 1).expect("string write");
                for c in &padded {
                    write!(body, ",{}", fmt(c[step])).expect("string write");
                }
                body.push('\n');
            }
            put(&format!("curves/{inst}.csv"), body)?;
        }
    }
    Ok(written)
}
