//! Reproducible experiment suites over the dyadshift toolkit: JSON configs,
//! seeded runs, CSV tables and JSON summaries with one verdict per criterion.

pub mod config;
pub mod emit;
pub mod fit;
pub mod report;
pub mod suites;

use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

pub use config::{ConfigError, Resolved, Suite, SuiteConfig};
pub use report::{Criterion, SuiteReport, Table};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Suite(#[from] suites::SuiteError),
    #[error(transparent)]
    Emit(#[from] emit::EmitError),
}

impl BenchError {
    /// `2` for configs rejected before execution, `1` for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            _ => 1,
        }
    }
}

/// Runs one resolved suite; the report depends only on the config.
pub fn run_suite(cfg: &Resolved) -> Result<SuiteReport, BenchError> {
    let outcome = suites::run(cfg)?;
    Ok(SuiteReport {
        suite: cfg.suite.name().to_string(),
        seed: cfg.seed,
        config: cfg.clone(),
        table: outcome.table,
        fits: outcome.fits,
        criteria: outcome.criteria,
        environment: report::Environment::current(),
    })
}

/// Default output directory for a suite.
pub fn default_out(suite: Suite) -> PathBuf {
    Path::new("results").join(suite.name())
}

/// Runs a suite, writes its files and returns the report with the paths.
pub fn run_and_emit(cfg: &Resolved, dir: &Path) -> Result<(SuiteReport, emit::Emitted), BenchError> {
    let start = Instant::now();
    let report = run_suite(cfg)?;
    let timing = report::Timing {
        suite: report.suite.clone(),
        seconds: start.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
    };
    let files = emit::emit(&report, &timing, dir)?;
    Ok((report, files))
}
