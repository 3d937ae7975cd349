//! Experiment harness for `horolab-core`.
//!
//! A run is a pure function of its resolved configuration: work is split into
//! indexed tasks with their own random streams, results are merged in task
//! order, and the files are written by a single thread. The worker count only
//! sizes the thread pool.

pub mod config;
pub mod experiments;
pub mod report;

use thiserror::Error;

pub use config::{ConfigError, ExperimentConfig, ParamValue};
pub use report::{Acceptance, Outcome};

use horolab_core::LabError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Lab(#[from] LabError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot build the worker pool: {0}")]
    Pool(String),
}

impl HarnessError {
    /// 2 for configuration problems, 3 when an enumeration budget ran out,
    /// 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Lab(LabError::EnumerationBudgetExceeded { .. }) => 3,
            Self::Lab(
                LabError::InvalidParameter(_)
                | LabError::InvalidMethodForMu { .. }
                | LabError::UnsupportedCurveShape(_)
                | LabError::UnsupportedDegree(_)
                | LabError::InvalidFamily(_),
            ) => 2,
            _ => 1,
        }
    }
}

/// Run an experiment on a pool of `cfg.workers` threads and write its files.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(Outcome, report::Written), HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    let outcome = pool.install(|| experiments::run(cfg))?;
    let written = report::emit(cfg, &outcome)?;
    Ok((outcome, written))
}

/// Resolve, run and report; returns the process exit code.
pub fn main_with(experiment: &str, config_text: Option<&str>, overrides: &[String]) -> i32 {
    let resolved = (|| -> Result<ExperimentConfig, ConfigError> {
        let mut entries = match config_text {
            Some(t) => config::parse_config_text(t)?,
            None => Vec::new(),
        };
        entries.extend(config::parse_overrides(overrides)?);
        ExperimentConfig::resolve(experiment, &entries)
    })();
    let cfg = match resolved {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match run_experiment(&cfg) {
        Ok((outcome, written)) => {
            for a in &outcome.acceptance {
                println!("{} {}: {}", if a.pass { "PASS" } else { "FAIL" }, a.name, a.detail);
            }
            println!("wrote {}", written.csv.display());
            if outcome.passed() {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
