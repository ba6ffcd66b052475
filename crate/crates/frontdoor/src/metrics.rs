//! Pre-registered endpoint metrics over session records.
//!
//! Accuracy-type endpoints are computed over unique cases (deterministic
//! decoding makes within-arm repeats perfectly correlated), while parse
//! rate, latency, and cost use all sessions. Quantiles are nearest-rank.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backends::HostingClass;
use crate::corpus::{CoarseGroup, Corpus, TaskLabel};
use crate::gateway::{ArmId, SessionRecord};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("metric undefined for the control arm")]
    UndefinedForControl,
    #[error("empty input")]
    EmptyInput,
    #[error("record references unknown case {0:?}")]
    UnknownCase(String),
    #[error("routing table must cover all six labels")]
    NonTotalRoutingTable,
}

/// Per-arm endpoint aggregates, mirroring the report table column layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: ArmId,
    pub backend: String,
    pub hosting: HostingClass,
    pub accuracy: f64,
    pub accuracy_parseable: f64,
    pub parse_rate: f64,
    pub f1_macro: f64,
    pub per_family_accuracy: BTreeMap<TaskLabel, f64>,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub total_cost_usd: f64,
    pub mean_cost_usd: f64,
    pub n_sessions: usize,
    pub n_eff: usize,
}

/// Guards accuracy-type metrics: control (pass-through) records have no
/// prediction and no failure, so accuracy is undefined for them.
fn reject_control(records: &[SessionRecord]) -> Result<(), MetricsError> {
    if records.iter().any(|r| r.is_control()) {
        return Err(MetricsError::UndefinedForControl);
    }
    Ok(())
}

/// Prediction per unique case: `Some(label)` for a schema-valid response,
/// `None` for a parse failure. Within-arm repeats are deduplicated (first
/// occurrence wins; repeats are identical under deterministic decoding).
pub fn predictions_by_case(
    records: &[SessionRecord],
    corpus: &Corpus,
) -> Result<BTreeMap<String, (TaskLabel, Option<TaskLabel>)>, MetricsError> {
    reject_control(records)?;
    let mut map = BTreeMap::new();
    for rec in records {
        let case_id = rec
            .case_id
            .clone()
            .ok_or_else(|| MetricsError::UnknownCase(String::new()))?;
        if map.contains_key(&case_id) {
            continue;
        }
        let case = corpus
            .get(&case_id)
            .ok_or_else(|| MetricsError::UnknownCase(case_id.clone()))?;
        let predicted = rec
            .predicted_label
            .as_deref()
            .and_then(|s| crate::corpus::parse_label(s).ok());
        map.insert(case_id, (case.ground_truth, predicted));
    }
    Ok(map)
}

/// Per-case correctness bits (exact match; failures are incorrect).
pub fn correctness_by_case(
    records: &[SessionRecord],
    corpus: &Corpus,
) -> Result<BTreeMap<String, bool>, MetricsError> {
    Ok(predictions_by_case(records, corpus)?
        .into_iter()
        .map(|(id, (truth, pred))| (id, pred == Some(truth)))
        .collect())
}

/// Exact-match accuracy over unique cases.
pub fn exact_accuracy(records: &[SessionRecord], corpus: &Corpus) -> Result<f64, MetricsError> {
    let bits = correctness_by_case(records, corpus)?;
    if bits.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(bits.values().filter(|&&b| b).count() as f64 / bits.len() as f64)
}

/// Accuracy restricted to cases with a schema-valid response.
pub fn accuracy_parseable(records: &[SessionRecord], corpus: &Corpus) -> Result<f64, MetricsError> {
    let preds = predictions_by_case(records, corpus)?;
    let parseable: Vec<_> = preds.values().filter(|(_, p)| p.is_some()).collect();
    if parseable.is_empty() {
        return Ok(0.0);
    }
    Ok(parseable.iter().filter(|(t, p)| *p == Some(*t)).count() as f64 / parseable.len() as f64)
}

/// Exact-match accuracy per family over unique cases; families with zero
/// cases are omitted.
pub fn per_family_accuracy(
    records: &[SessionRecord],
    corpus: &Corpus,
) -> Result<BTreeMap<TaskLabel, f64>, MetricsError> {
    let preds = predictions_by_case(records, corpus)?;
    let mut totals: BTreeMap<TaskLabel, (usize, usize)> = BTreeMap::new();
    for (truth, pred) in preds.values() {
        let entry = totals.entry(*truth).or_insert((0, 0));
        entry.0 += 1;
        if *pred == Some(*truth) {
            entry.1 += 1;
        }
    }
    Ok(totals
        .into_iter()
        .map(|(family, (n, correct))| (family, correct as f64 / n as f64))
        .collect())
}

/// Fraction of all session records (not deduplicated) with a schema-valid
/// response.
pub fn parse_rate(records: &[SessionRecord]) -> Result<f64, MetricsError> {
    reject_control(records)?;
    if records.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let ok = records
        .iter()
        .filter(|r| r.predicted_label.is_some())
        .count();
    Ok(ok as f64 / records.len() as f64)
}

/// Macro F1 over unique cases. Parse failures act as a reserved non-label
/// prediction class: they add false negatives to the true class and no
/// false positives to any real class. Labels with no actual positives are
/// excluded from the mean.
pub fn f1_macro(records: &[SessionRecord], corpus: &Corpus) -> Result<f64, MetricsError> {
    let preds = predictions_by_case(records, corpus)?;
    if preds.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut f1s = Vec::new();
    for label in TaskLabel::ALL {
        let actual = preds.values().filter(|(t, _)| *t == label).count();
        if actual == 0 {
            continue;
        }
        let tp = preds
            .values()
            .filter(|(t, p)| *t == label && *p == Some(label))
            .count() as f64;
        let r#fp = preds
            .values()
            .filter(|(t, p)| *t != label && *p == Some(label))
            .count() as f64;
        let r#fn = actual as f64 - tp;
        let denom = 2.0 * tp + r#fp + r#fn;
        f1s.push(if denom == 0.0 { 0.0 } else { 2.0 * tp / denom });
    }
    Ok(f1s.iter().sum::<f64>() / f1s.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyQuantiles {
    pub median_ms: f64,
    pub p95_ms: f64,
}

/// Nearest-rank quantile: the value at index ceil(q * n) of the ascending
/// sort, 1-based.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).max(1);
    sorted[rank - 1]
}

pub fn latency_quantiles(records: &[SessionRecord]) -> Result<LatencyQuantiles, MetricsError> {
    let mut values: Vec<f64> = records.iter().map(|r| r.latency_ms).collect();
    latency_quantiles_of(&mut values)
}

pub fn latency_quantiles_of(values: &mut [f64]) -> Result<LatencyQuantiles, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(LatencyQuantiles {
        median_ms: nearest_rank(values, 0.5),
        p95_ms: nearest_rank(values, 0.95),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostAggregates {
    pub total_usd: f64,
    pub mean_usd: f64,
    pub empty: bool,
}

pub fn cost_aggregates(records: &[SessionRecord]) -> CostAggregates {
    let total: f64 = records.iter().map(|r| r.cost_usd).sum();
    if records.is_empty() {
        CostAggregates {
            total_usd: 0.0,
            mean_usd: 0.0,
            empty: true,
        }
    } else {
        CostAggregates {
            total_usd: total,
            mean_usd: total / records.len() as f64,
            empty: false,
        }
    }
}

/// Where a misclassified case was routed, at coarse-group granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CorridorTarget {
    Group(CoarseGroup),
    ParseFailure,
}

impl CorridorTarget {
    pub fn as_str(&self) -> String {
        match self {
            CorridorTarget::Group(g) => g.to_string(),
            CorridorTarget::ParseFailure => "parse_failure".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCorridor {
    pub from_group: CoarseGroup,
    pub to: CorridorTarget,
    pub count: usize,
}

/// Directional confusion between coarse groups over incorrect unique cases,
/// sorted by count descending.
pub fn error_corridors(
    records: &[SessionRecord],
    corpus: &Corpus,
) -> Result<Vec<ErrorCorridor>, MetricsError> {
    let preds = predictions_by_case(records, corpus)?;
    let mut counts: BTreeMap<(CoarseGroup, CorridorTarget), usize> = BTreeMap::new();
    for (truth, pred) in preds.values() {
        match pred {
            Some(p) if p == truth => {}
            Some(p) => {
                *counts
                    .entry((truth.coarse_group(), CorridorTarget::Group(p.coarse_group())))
                    .or_insert(0) += 1;
            }
            None => {
                *counts
                    .entry((truth.coarse_group(), CorridorTarget::ParseFailure))
                    .or_insert(0) += 1;
            }
        }
    }
    let mut corridors: Vec<ErrorCorridor> = counts
        .into_iter()
        .map(|((from_group, to), count)| ErrorCorridor {
            from_group,
            to,
            count,
        })
        .collect();
    corridors.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then(a.from_group.cmp(&b.from_group))
            .then(a.to.cmp(&b.to))
    });
    Ok(corridors)
}

/// Full per-arm summary for a treatment arm.
pub fn summarize_arm(
    arm: ArmId,
    backend: &str,
    hosting: HostingClass,
    records: &[SessionRecord],
    corpus: &Corpus,
) -> Result<ArmSummary, MetricsError> {
    let quantiles = latency_quantiles(records)?;
    let costs = cost_aggregates(records);
    let n_eff = correctness_by_case(records, corpus)?.len();
    Ok(ArmSummary {
        arm,
        backend: backend.to_string(),
        hosting,
        accuracy: exact_accuracy(records, corpus)?,
        accuracy_parseable: accuracy_parseable(records, corpus)?,
        parse_rate: parse_rate(records)?,
        f1_macro: f1_macro(records, corpus)?,
        per_family_accuracy: per_family_accuracy(records, corpus)?,
        median_ms: quantiles.median_ms,
        p95_ms: quantiles.p95_ms,
        total_cost_usd: costs.total_usd,
        mean_cost_usd: costs.mean_usd,
        n_sessions: records.len(),
        n_eff,
    })
}

// ---------------------------------------------------------------------------
// Cost model: routing table, savings, break-even
// ---------------------------------------------------------------------------

/// Downstream routing target for one label. The compression-policy tag is
/// carried opaquely and never interpreted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteTarget {
    pub tier: String,
    pub cost_usd: f64,
    #[serde(default)]
    pub policy_tag: String,
}

/// Total map from every label to its downstream target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingTable {
    pub entries: BTreeMap<TaskLabel, RouteTarget>,
}

impl RoutingTable {
    /// A single-tier table mapping every label to the same target.
    pub fn uniform(tier: &str, cost_usd: f64) -> RoutingTable {
        RoutingTable {
            entries: TaskLabel::ALL
                .iter()
                .map(|&l| {
                    (
                        l,
                        RouteTarget {
                            tier: tier.to_string(),
                            cost_usd,
                            policy_tag: String::new(),
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if TaskLabel::ALL.iter().all(|l| self.entries.contains_key(l)) {
            Ok(())
        } else {
            Err(MetricsError::NonTotalRoutingTable)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Front-door classifier cost per request.
    pub c_fd: f64,
    /// Cost of sending a request to the default (most expensive) model.
    pub auto_cost: f64,
    pub routing_table: RoutingTable,
    /// Whether a misroute triggers a retry at full auto cost.
    pub retry_on_misroute: bool,
}

/// One routed request's classification outcome for cost accounting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoutingDecision {
    pub true_label: TaskLabel,
    /// `None` models a parse failure (fallback-routed to the auto tier).
    pub predicted: Option<TaskLabel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Savings {
    pub total_usd: f64,
    pub per_request_mean: f64,
}

/// Net routing savings versus always using the default model.
///
/// Correct route: auto minus (front door + routed tier). Misroute with the
/// retry policy on additionally pays the full auto cost. Parse failures
/// fall back to the auto tier with no retry.
pub fn cost_savings(
    decisions: &[RoutingDecision],
    model: &CostModel,
) -> Result<Savings, MetricsError> {
    model.routing_table.validate()?;
    let mut total = 0.0;
    for d in decisions {
        let routed = match d.predicted {
            Some(pred) => {
                let mut c = model.c_fd + model.routing_table.entries[&pred].cost_usd;
                if pred != d.true_label && model.retry_on_misroute {
                    c += model.auto_cost;
                }
                c
            }
            None => model.c_fd + model.auto_cost,
        };
        total += model.auto_cost - routed;
    }
    let mean = if decisions.is_empty() {
        0.0
    } else {
        total / decisions.len() as f64
    };
    Ok(Savings {
        total_usd: total,
        per_request_mean: mean,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BreakEven {
    Accuracy(f64),
    NoBreakEven,
}

/// Expected per-request savings at accuracy `a` under the label mix.
/// Misroutes are modeled as landing in the true label's tier.
pub fn expected_savings(model: &CostModel, label_mix: &[(TaskLabel, f64)], a: f64) -> f64 {
    label_mix
        .iter()
        .map(|(label, w)| {
            let tier = model.routing_table.entries[label].cost_usd;
            let base = model.auto_cost - model.c_fd - tier;
            let retry = if model.retry_on_misroute {
                (1.0 - a) * model.auto_cost
            } else {
                0.0
            };
            w * (base - retry)
        })
        .sum()
}

/// Smallest accuracy in [0, 1] with nonnegative expected savings, found by
/// bisection on the monotone expected-savings function.
pub fn break_even_accuracy(
    model: &CostModel,
    label_mix: &[(TaskLabel, f64)],
) -> Result<BreakEven, MetricsError> {
    model.routing_table.validate()?;
    if expected_savings(model, label_mix, 1.0) < 0.0 {
        return Ok(BreakEven::NoBreakEven);
    }
    if expected_savings(model, label_mix, 0.0) >= 0.0 {
        return Ok(BreakEven::Accuracy(0.0));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if expected_savings(model, label_mix, mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(BreakEven::Accuracy(0.5 * (lo + hi)))
}

// ---------------------------------------------------------------------------
// Pareto frontier
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub arm: String,
    pub cost: f64,
    pub accuracy: f64,
}

/// Point `a` dominates `b` when cost_a <= cost_b and acc_a >= acc_b with at
/// least one strict inequality.
pub fn dominates(a: &ParetoPoint, b: &ParetoPoint) -> bool {
    a.cost <= b.cost
        && a.accuracy >= b.accuracy
        && (a.cost < b.cost || a.accuracy > b.accuracy)
}

/// All points not dominated by any other; exact duplicates are retained.
pub fn pareto_frontier(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    points
        .iter()
        .filter(|p| !points.iter().any(|q| dominates(q, p)))
        .cloned()
        .collect()
}
