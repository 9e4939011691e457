//! Monte-Carlo experiment runner for the `iwpriv` estimators and bandits:
//! TOML configs in, a fixed-schema CSV plus a JSON sidecar out.

pub mod config;
pub mod metrics;
pub mod moments;
pub mod output;
pub mod run;
pub mod selftest;
pub mod slope;

use std::path::Path;

use thiserror::Error;

pub use config::{ExperimentConfig, ExperimentKind};
pub use metrics::Metric;
pub use moments::estimate_moments_mc;
pub use output::{ResultRow, Sidecar};
pub use run::{run_experiment, RunOutput};
pub use slope::{fit_loglog_slope, SlopeFit};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            _ => 3,
        }
    }
}

/// Runs a resolved config and returns its rows in task order.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    Ok(run_experiment(cfg, 0)?.rows)
}

/// Runs a resolved config and writes the CSV, the sidecar and, for bandits
/// with `trace_out`, the regret trace.
pub fn run_to_files(cfg: &ExperimentConfig, out: &Path, threads: usize) -> Result<RunOutput, HarnessError> {
    let res = run_experiment(cfg, threads)?;
    output::write_outputs(out, &res.rows, &res.sidecar(&out.display().to_string()))?;
    if let (Some(path), Some(trace)) = (cfg.bandit.as_ref().and_then(|b| b.trace_out.as_ref()), &res.trace) {
        let mut buf = Vec::new();
        trace.write_csv(&mut buf)?;
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, buf)?;
    }
    Ok(res)
}
