//! Configured scenario runs: validation, execution, CSV tables and a JSON
//! report.

pub mod config;
pub mod report;
pub mod scenarios;

use std::path::Path;

pub use config::{ConfigError, Diagnostic, ExperimentConfig, RawConfig, Scenario};
pub use report::{Comparison, Metric, Provenance, RunReport};

/// Name of the report written into the output directory.
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(#[from] crate::Error),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    /// Process exit status for this failure. Metric failures (status 1) are
    /// not errors; they are reported by [`RunReport::pass`].
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) | RunError::Io(_) => 3,
        }
    }
}

/// Runs one validated scenario, writing its tables and `report.json` into `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport, RunError> {
    std::fs::create_dir_all(out)?;
    let outcome = scenarios::run(cfg, out)?;
    let report = RunReport {
        scenario: cfg.scenario.name().to_string(),
        pass: outcome.metrics.iter().all(|m| m.pass),
        metrics: outcome.metrics,
        provenance: Provenance {
            config_hash: cfg.hash(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
        },
        files: outcome.files,
    };
    report.write_json(&out.join(REPORT_FILE))?;
    Ok(report)
}

/// Loads, validates and runs the config at `path`.
pub fn run_file(path: &Path, out: &Path) -> Result<RunReport, RunError> {
    let cfg = config::load_and_validate(path)?;
    run(&cfg, out)
}
