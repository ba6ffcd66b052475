//! Simulated classifier backends.
//!
//! A backend replays a deterministic per-case trace (reproducing greedy,
//! temperature-zero decoding: the same case always yields the same raw
//! output) while latency is drawn fresh from a log-normal model fitted to a
//! published (median, P95) pair. Cost is a flat marginal per-request charge.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Hosting class of a backend, ordered by operational preference for
/// tie-breaking: self-hosted > serverless > API.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HostingClass {
    SelfHosted,
    Serverless,
    Api,
}

impl HostingClass {
    /// Lower rank is preferred.
    pub fn preference_rank(&self) -> u8 {
        match self {
            HostingClass::SelfHosted => 0,
            HostingClass::Serverless => 1,
            HostingClass::Api => 2,
        }
    }
}

/// One deterministic trace entry: the verbatim text the simulated model
/// returns for a case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub case_id: String,
    pub raw_output: String,
}

/// Log-normal latency sampler pinned to a (median, P95) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub median_ms: f64,
    pub p95_ms: f64,
    mu: f64,
    sigma: f64,
}

/// Standard normal 95th-percentile quantile used for the fit.
const Z95: f64 = 1.6449;

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("invalid latency quantiles: median {median_ms} ms, p95 {p95_ms} ms")]
    InvalidQuantiles { median_ms: f64, p95_ms: f64 },
    #[error("no trace entry for case {0}")]
    MissingTraceEntry(String),
    #[error("line {line}: malformed trace line: {reason}")]
    MalformedTrace { line: usize, reason: String },
    #[error("trace io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Fits a log-normal with median = `median_ms` and 95th percentile =
/// `p95_ms`. Equal quantiles degenerate to constant latency.
pub fn fit_latency_model(median_ms: f64, p95_ms: f64) -> Result<LatencyModel, BackendError> {
    let valid = median_ms > 0.0 && p95_ms >= median_ms;
    if !valid {
        return Err(BackendError::InvalidQuantiles { median_ms, p95_ms });
    }
    Ok(LatencyModel {
        median_ms,
        p95_ms,
        mu: median_ms.ln(),
        sigma: (p95_ms.ln() - median_ms.ln()) / Z95,
    })
}

impl LatencyModel {
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// One strictly positive draw: exp(mu + sigma * z).
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        (self.mu + self.sigma * z).exp()
    }
}

/// Recorded decode settings. Metadata only; the simulator never decodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeBudget {
    pub max_new_tokens: u32,
    pub temperature: f64,
}

impl Default for DecodeBudget {
    fn default() -> Self {
        DecodeBudget {
            max_new_tokens: 128,
            temperature: 0.0,
        }
    }
}

/// A fully configured simulated arm backend.
#[derive(Debug, Clone)]
pub struct BackendSpec {
    pub name: String,
    pub hosting: HostingClass,
    pub marginal_cost_usd: f64,
    pub latency: LatencyModel,
    pub trace: BTreeMap<String, TraceEntry>,
    pub decode: DecodeBudget,
}

/// The result of one backend invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub raw_output: String,
    pub latency_ms: f64,
    pub cost_usd: f64,
}

impl BackendSpec {
    /// Replays the trace entry for `case_id` with a fresh latency sample.
    /// Raw output is identical on every invocation of the same case.
    pub fn invoke(&self, case_id: &str, rng: &mut impl Rng) -> Result<Invocation, BackendError> {
        let entry = self
            .trace
            .get(case_id)
            .ok_or_else(|| BackendError::MissingTraceEntry(case_id.to_string()))?;
        Ok(Invocation {
            raw_output: entry.raw_output.clone(),
            latency_ms: self.latency.sample(rng),
            cost_usd: self.marginal_cost_usd,
        })
    }

    /// True when the trace covers every listed case id.
    pub fn covers<'a>(&self, case_ids: impl IntoIterator<Item = &'a str>) -> bool {
        case_ids.into_iter().all(|id| self.trace.contains_key(id))
    }
}

/// Loads a JSONL trace file: `{"case_id": ..., "raw_output": ...}` per line.
pub fn load_trace(path: impl AsRef<Path>) -> Result<BTreeMap<String, TraceEntry>, BackendError> {
    let text = std::fs::read_to_string(path)?;
    let mut trace = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: TraceEntry =
            serde_json::from_str(line).map_err(|e| BackendError::MalformedTrace {
                line: idx + 1,
                reason: e.to_string(),
            })?;
        if trace.insert(entry.case_id.clone(), entry).is_some() {
            return Err(BackendError::MalformedTrace {
                line: idx + 1,
                reason: "duplicate case_id in trace".into(),
            });
        }
    }
    Ok(trace)
}
