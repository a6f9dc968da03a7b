//! CSV convergence traces and JSON run summaries.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tensolve_core::solvers::{IterRecord, Status};

use crate::CliError;

pub const COLUMNS: [&str; 8] =
    ["iter", "wall_time_s", "rel_residual", "max_rank", "step_size", "inner_iters", "operator_applies", "retraction_rank"];

fn io(e: impl std::fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}

/// Floats use Rust's shortest round-trip formatting, so equal values give
/// equal text and parsing gives back the same bits.
pub fn write_trace(w: impl Write, config_hash: &str, records: &[IterRecord]) -> Result<(), CliError> {
    let mut w = w;
    writeln!(w, "# config_hash: sha256:{config_hash}").map_err(io)?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(COLUMNS).map_err(io)?;
    for r in records {
        csv.write_record([
            r.iter.to_string(),
            format!("{:e}", r.wall_time_s),
            format!("{:e}", r.rel_residual),
            r.max_rank.to_string(),
            format!("{:e}", r.step_size),
            r.inner_iters.to_string(),
            r.operator_applies.to_string(),
            r.retraction_rank.to_string(),
        ])
        .map_err(io)?;
    }
    csv.flush().map_err(io)
}

pub fn save_trace(path: &Path, config_hash: &str, records: &[IterRecord]) -> Result<(), CliError> {
    let f = std::fs::File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    write_trace(std::io::BufWriter::new(f), config_hash, records)
}

/// Parses a trace; returns the config hash and the rows.
pub fn read_trace(text: &str) -> Result<(String, Vec<IterRecord>), CliError> {
    let first = text.lines().next().unwrap_or("");
    let hash = first
        .strip_prefix("# config_hash: sha256:")
        .ok_or_else(|| CliError::Trace("missing config_hash header".into()))?
        .trim()
        .to_string();
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| CliError::Trace(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != COLUMNS {
        return Err(CliError::Trace(format!("unexpected columns {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Trace(e.to_string()))?;
        let u = |i: usize| rec[i].parse::<usize>().map_err(|e| CliError::Trace(format!("column {}: {e}", COLUMNS[i])));
        let f = |i: usize| rec[i].parse::<f64>().map_err(|e| CliError::Trace(format!("column {}: {e}", COLUMNS[i])));
        rows.push(IterRecord {
            iter: u(0)?,
            wall_time_s: f(1)?,
            rel_residual: f(2)?,
            max_rank: u(3)?,
            step_size: f(4)?,
            inner_iters: u(5)?,
            operator_applies: u(6)?,
            retraction_rank: u(7)?,
        });
    }
    Ok((hash, rows))
}

/// Rows compared on everything except wall time, bit for bit.
pub fn same_trace(a: &[IterRecord], b: &[IterRecord]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.iter == y.iter
                && x.rel_residual.to_bits() == y.rel_residual.to_bits()
                && x.max_rank == y.max_rank
                && x.step_size.to_bits() == y.step_size.to_bits()
                && x.inner_iters == y.inner_iters
                && x.operator_applies == y.operator_applies
                && x.retraction_rank == y.retraction_rank
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub status: String,
    pub converged: bool,
    pub iterations: usize,
    pub total_time_s: f64,
    pub final_residual: f64,
    pub operator_applies: usize,
    pub max_retraction_rank: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stage_ends: Vec<usize>,
}

pub fn status_name(s: &Status) -> String {
    match s {
        Status::Converged => "converged".into(),
        Status::MaxIters => "max_iters".into(),
        Status::LineSearchFailed => "line_search_failed".into(),
        Status::Failed(m) => format!("failed: {m}"),
    }
}

impl Summary {
    pub fn new(config_hash: &str, status: &Status, records: &[IterRecord], stage_ends: &[usize]) -> Self {
        let last = records.last();
        Self {
            config_hash: config_hash.to_string(),
            status: status_name(status),
            converged: *status == Status::Converged,
            iterations: last.map_or(0, |r| r.iter),
            total_time_s: last.map_or(0.0, |r| r.wall_time_s),
            final_residual: last.map_or(f64::NAN, |r| r.rel_residual),
            operator_applies: last.map_or(0, |r| r.operator_applies),
            max_retraction_rank: records.iter().map(|r| r.retraction_rank).max().unwrap_or(0),
            stage_ends: stage_ends.to_vec(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(io)?;
        std::fs::write(path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}
