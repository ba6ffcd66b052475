//! Run artifacts: manifest, session log, report JSON, and plot CSV.
//!
//! Everything written here is deterministic under a fixed seed except the
//! manifest's wall-clock timestamps, which are excluded from any
//! reproducibility comparison.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::gateway::SessionRecord;
use crate::metrics::ArmSummary;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("io error writing {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: session log schema violation: {reason}")]
    SchemaViolation { line: usize, reason: String },
    #[error("serialization error: {0}")]
    Serialize(#[from] serde_json::Error),
}

fn io_err(path: &Path, source: std::io::Error) -> ReportError {
    ReportError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// The run manifest: config echo plus provenance fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub corpus_digest: String,
    pub master_seed: u64,
    pub started_at: String,
    pub finished_at: String,
    /// Protocol substitutions applied by the engine, recorded for audit.
    pub substitutions: Vec<String>,
}

pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<(), ReportError> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// One JSONL line per record, in order.
pub fn write_session_log(
    path: impl AsRef<Path>,
    records: &[SessionRecord],
) -> Result<(), ReportError> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record)?;
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a session log, reporting the first malformed line by number.
pub fn read_session_log(path: impl AsRef<Path>) -> Result<Vec<SessionRecord>, ReportError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: SessionRecord =
            serde_json::from_str(line).map_err(|e| ReportError::SchemaViolation {
                line: idx + 1,
                reason: e.to_string(),
            })?;
        records.push(record);
    }
    Ok(records)
}

/// Scatter plot data, one row per treatment arm.
pub fn scatter_csv(arms: &[ArmSummary]) -> String {
    let mut out = String::from("arm,accuracy,p95_ms\n");
    for arm in arms {
        out.push_str(&format!("{},{},{}\n", arm.arm, arm.accuracy, arm.p95_ms));
    }
    out
}

pub fn write_scatter_csv(path: impl AsRef<Path>, arms: &[ArmSummary]) -> Result<(), ReportError> {
    let path = path.as_ref();
    std::fs::write(path, scatter_csv(arms)).map_err(|e| io_err(path, e))
}
