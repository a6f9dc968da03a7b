//! Config files, traces, the iterate container and the experiment driver
//! behind the `tensolve` binary.

pub mod config;
pub mod container;
pub mod experiment;
pub mod suites;
pub mod trace;

use std::path::Path;

use config::ExperimentConfig;
use experiment::RunOutput;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("iterate container: {0}")]
    Container(String),
    #[error("trace: {0}")]
    Trace(String),
    #[error(transparent)]
    Solver(#[from] tensolve_core::error::Error),
}

pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const ITERATE_FILE: &str = "iterate.bin";
pub const CONFIG_FILE: &str = "config.json";

/// Writes `trace.csv`, `summary.json`, `iterate.bin` and a copy of the
/// config into `dir`.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, out: &RunOutput) -> Result<trace::Summary, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let hash = cfg.hash();
    trace::save_trace(&dir.join(TRACE_FILE), &hash, &out.records)?;
    let summary = trace::Summary::new(&hash, &out.status, &out.records, &out.stage_ends);
    summary.save(&dir.join(SUMMARY_FILE))?;
    container::save(&dir.join(ITERATE_FILE), &out.iterate)?;
    std::fs::write(dir.join(CONFIG_FILE), cfg.to_json() + "\n").map_err(|e| CliError::Io(e.to_string()))?;
    Ok(summary)
}

/// Result of re-deriving the final residual of a stored iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct Verification {
    pub recomputed: f64,
    /// Last trace row, when a trace sits next to the iterate.
    pub recorded: Option<f64>,
}

impl Verification {
    pub const TOL: f64 = 1e-10;

    pub fn matches(&self) -> bool {
        self.recorded.is_none_or(|r| (r - self.recomputed).abs() <= Self::TOL)
    }
}

pub fn verify(iterate: &Path, cfg: &ExperimentConfig) -> Result<Verification, CliError> {
    let it = container::load(iterate)?;
    let recomputed = experiment::relative_residual(cfg, &it)?;
    let trace_path = iterate.with_file_name(TRACE_FILE);
    let recorded = if trace_path.exists() {
        let text = std::fs::read_to_string(&trace_path).map_err(|e| CliError::Io(e.to_string()))?;
        let (hash, rows) = trace::read_trace(&text)?;
        if hash != cfg.hash() {
            return Err(CliError::Trace("trace was produced by a different config".into()));
        }
        rows.last().map(|r| r.rel_residual)
    } else {
        None
    };
    Ok(Verification { recomputed, recorded })
}
