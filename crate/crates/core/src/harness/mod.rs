//! Experiment orchestration: configuration, datasets, runs, metrics and
//! table emission.

pub mod checks;
pub mod config;
pub mod data;
pub mod report;
pub mod run;
pub mod tables;

pub use config::{ExperimentConfig, Method};
pub use data::Dataset;
pub use report::MetricsReport;

/// Environment variable naming the root for relative output paths.
pub const OUTPUT_ROOT_ENV: &str = "TRAJPREF_OUTPUT_ROOT";

/// Resolves `path` against the output root when it is relative.
pub fn output_path(path: &std::path::Path) -> std::path::PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if path.is_relative() => std::path::Path::new(&root).join(path),
        _ => path.to_path_buf(),
    }
}
