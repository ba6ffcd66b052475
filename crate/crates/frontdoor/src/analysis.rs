//! The shared analysis pipeline.
//!
//! Turns session records into the full pre-registered readout: per-arm
//! summaries, pairwise accuracy tests (exact McNemar, Holm-corrected),
//! pairwise latency/cost tests (Welch, Holm-corrected as one family),
//! bootstrap P95 intervals, error corridors, the Pareto frontier, the
//! interim-look boundary check, the viable-region gates, and the decision.
//! Both live experiments and archived-log re-analysis run through the same
//! entry point, so their reports are identical by construction.

use serde::{Deserialize, Serialize};

use crate::backends::{BackendSpec, HostingClass};
use crate::corpus::Corpus;
use crate::decisions::{decide, viable_gate, DecisionError, DecisionOutcome, GateResult, Gates,
    PairwiseSignificance};
use crate::engine::records_by_arm;
use crate::gateway::{ArmId, SessionRecord};
use crate::metrics::{self, ArmSummary, ErrorCorridor, MetricsError, ParetoPoint};
use crate::stats::{self, ConfidenceInterval, StatsError, TwoLookPlan};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("stats: {0}")]
    Stats(#[from] StatsError),
    #[error("decision: {0}")]
    Decision(#[from] DecisionError),
    #[error("arm {0} has no records")]
    EmptyArm(ArmId),
}

/// Static description of one treatment arm (index 1..=k; 0 is control).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArmMeta {
    pub arm: ArmId,
    pub name: String,
    pub hosting: HostingClass,
}

/// Arm metadata in config order, treatments starting at arm 1.
pub fn arm_meta(backends: &[BackendSpec]) -> Vec<ArmMeta> {
    backends
        .iter()
        .enumerate()
        .map(|(i, b)| ArmMeta {
            arm: ArmId(i + 1),
            name: b.name.clone(),
            hosting: b.hosting,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTest {
    pub left: ArmId,
    pub right: ArmId,
    /// Cases left got right and right got wrong, and vice versa.
    pub b: usize,
    pub c: usize,
    pub p_value: f64,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanTest {
    pub metric: String,
    pub left: ArmId,
    pub right: ArmId,
    /// Absent when both samples are constant (degenerate variance); the
    /// p-value is then 1 for equal means and 0 otherwise.
    pub t: Option<f64>,
    pub df: Option<f64>,
    pub p_value: f64,
    pub rejected: bool,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileCi {
    pub arm: ArmId,
    pub metric: String,
    pub point: f64,
    pub ci: ConfidenceInterval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterimComparison {
    pub left: ArmId,
    pub right: ArmId,
    pub p_value: f64,
    pub abs_z: f64,
    pub crossed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterimSection {
    pub plan: TwoLookPlan,
    pub comparisons: Vec<InterimComparison>,
    pub any_crossed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmCorridors {
    pub arm: ArmId,
    pub corridors: Vec<ErrorCorridor>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub alpha: f64,
    pub gates: Gates,
    pub corpus_digest: String,
    pub control_sessions: usize,
    pub arms: Vec<ArmSummary>,
    pub accuracy_tests: Vec<AccuracyTest>,
    pub latency_cost_tests: Vec<MeanTest>,
    pub p95_bootstrap: Vec<QuantileCi>,
    pub corridors: Vec<ArmCorridors>,
    pub pareto_frontier: Vec<ParetoPoint>,
    pub interim: Option<InterimSection>,
    pub gate_results: Vec<GateResult>,
    pub decision: DecisionOutcome,
}

/// Analysis knobs shared by live runs and log re-analysis.
#[derive(Debug, Clone, Copy)]
pub struct AnalysisParams {
    pub alpha: f64,
    pub gates: Gates,
    /// Seeds the bootstrap resampling.
    pub master_seed: u64,
    /// Information fraction of the interim look (interim_at / N).
    pub interim_fraction: f64,
    pub bootstrap_resamples: usize,
}

const DEFAULT_BOOTSTRAP_RESAMPLES: usize = 2000;

impl AnalysisParams {
    pub fn new(alpha: f64, gates: Gates, master_seed: u64, interim_fraction: f64) -> Self {
        AnalysisParams {
            alpha,
            gates,
            master_seed,
            interim_fraction,
            bootstrap_resamples: DEFAULT_BOOTSTRAP_RESAMPLES,
        }
    }
}

fn all_pairs(meta: &[ArmMeta]) -> Vec<(ArmId, ArmId)> {
    let mut pairs = Vec::new();
    for i in 0..meta.len() {
        for j in (i + 1)..meta.len() {
            pairs.push((meta[i].arm, meta[j].arm));
        }
    }
    pairs
}

fn arm_records(
    by_arm: &[Vec<SessionRecord>],
    arm: ArmId,
) -> Result<&[SessionRecord], AnalysisError> {
    let records = by_arm
        .get(arm.0)
        .filter(|r| !r.is_empty())
        .ok_or(AnalysisError::EmptyArm(arm))?;
    Ok(records)
}

/// Pairwise accuracy family: exact McNemar per treatment pair, Holm across
/// the family.
fn accuracy_family(
    by_arm: &[Vec<SessionRecord>],
    meta: &[ArmMeta],
    corpus: &Corpus,
    alpha: f64,
) -> Result<Vec<AccuracyTest>, AnalysisError> {
    let pairs = all_pairs(meta);
    let mut tests = Vec::with_capacity(pairs.len());
    for (left, right) in &pairs {
        let left_bits = metrics::correctness_by_case(arm_records(by_arm, *left)?, corpus)?;
        let right_bits = metrics::correctness_by_case(arm_records(by_arm, *right)?, corpus)?;
        let (b, c) = stats::paired_discordants(&left_bits, &right_bits)?;
        let r = stats::mcnemar_exact(b, c);
        tests.push(AccuracyTest {
            left: *left,
            right: *right,
            b,
            c,
            p_value: r.p_value,
            rejected: false,
        });
    }
    let p_values: Vec<f64> = tests.iter().map(|t| t.p_value).collect();
    for (test, rejected) in tests.iter_mut().zip(stats::holm_bonferroni(&p_values, alpha)) {
        test.rejected = rejected;
    }
    Ok(tests)
}

/// Latency and cost pairwise Welch tests, corrected as one Holm family
/// (2 metrics x all treatment pairs).
fn latency_cost_family(
    by_arm: &[Vec<SessionRecord>],
    meta: &[ArmMeta],
    alpha: f64,
) -> Result<Vec<MeanTest>, AnalysisError> {
    let pairs = all_pairs(meta);
    let mut tests = Vec::new();
    for metric in ["latency_ms", "cost_usd"] {
        for (left, right) in &pairs {
            let extract = |records: &[SessionRecord]| -> Vec<f64> {
                records
                    .iter()
                    .map(|r| {
                        if metric == "latency_ms" {
                            r.latency_ms
                        } else {
                            r.cost_usd
                        }
                    })
                    .collect()
            };
            let a = extract(arm_records(by_arm, *left)?);
            let b = extract(arm_records(by_arm, *right)?);
            let test = match stats::welch_t(&a, &b) {
                Ok(r) => MeanTest {
                    metric: metric.to_string(),
                    left: *left,
                    right: *right,
                    t: Some(r.t),
                    df: Some(r.df),
                    p_value: r.p_value,
                    rejected: false,
                    degenerate: false,
                },
                // Both arms constant: equal means are indistinguishable
                // (p = 1), unequal means differ with certainty (p = 0).
                Err(StatsError::DegenerateVariance) => {
                    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
                    let p = if mean(&a) == mean(&b) { 1.0 } else { 0.0 };
                    MeanTest {
                        metric: metric.to_string(),
                        left: *left,
                        right: *right,
                        t: None,
                        df: None,
                        p_value: p,
                        rejected: false,
                        degenerate: true,
                    }
                }
                Err(e) => return Err(e.into()),
            };
            tests.push(test);
        }
    }
    let p_values: Vec<f64> = tests.iter().map(|t| t.p_value).collect();
    for (test, rejected) in tests.iter_mut().zip(stats::holm_bonferroni(&p_values, alpha)) {
        test.rejected = rejected;
    }
    Ok(tests)
}

fn interim_section(
    interim_records: &[SessionRecord],
    meta: &[ArmMeta],
    corpus: &Corpus,
    params: &AnalysisParams,
) -> Result<InterimSection, AnalysisError> {
    let arm_count = meta.iter().map(|m| m.arm.0).max().unwrap_or(0) + 1;
    let by_arm = records_by_arm(interim_records, arm_count);
    let plan = stats::two_look_plan(params.interim_fraction, params.alpha);
    let mut comparisons = Vec::new();
    for (left, right) in all_pairs(meta) {
        let mut left_bits = metrics::correctness_by_case(arm_records(&by_arm, left)?, corpus)?;
        let mut right_bits = metrics::correctness_by_case(arm_records(&by_arm, right)?, corpus)?;
        // Before a full case cycle the arms may have seen different subsets;
        // the interim pairing uses the cases both arms have covered.
        left_bits.retain(|k, _| right_bits.contains_key(k));
        right_bits.retain(|k, _| left_bits.contains_key(k));
        let (b, c) = stats::paired_discordants(&left_bits, &right_bits)?;
        let p_value = stats::mcnemar_exact(b, c).p_value;
        let abs_z = stats::p_to_abs_z(p_value);
        comparisons.push(InterimComparison {
            left,
            right,
            p_value,
            abs_z,
            crossed: abs_z >= plan.interim_z,
        });
    }
    let any_crossed = comparisons.iter().any(|c| c.crossed);
    Ok(InterimSection {
        plan,
        comparisons,
        any_crossed,
    })
}

/// Runs the complete pipeline over one run's records.
pub fn analyze(
    records: &[SessionRecord],
    interim_records: Option<&[SessionRecord]>,
    corpus: &Corpus,
    meta: &[ArmMeta],
    params: &AnalysisParams,
) -> Result<AnalysisReport, AnalysisError> {
    let arm_count = meta.iter().map(|m| m.arm.0).max().unwrap_or(0) + 1;
    let by_arm = records_by_arm(records, arm_count);

    let mut arms = Vec::with_capacity(meta.len());
    let mut p95_bootstrap = Vec::new();
    let mut corridors = Vec::new();
    for m in meta {
        let records = arm_records(&by_arm, m.arm)?;
        let summary = metrics::summarize_arm(m.arm, &m.name, m.hosting, records, corpus)?;
        let latencies: Vec<f64> = records.iter().map(|r| r.latency_ms).collect();
        let ci = stats::bootstrap_quantile_ci(
            &latencies,
            0.95,
            params.bootstrap_resamples,
            params.alpha,
            params.master_seed.wrapping_add(m.arm.0 as u64),
        )?;
        p95_bootstrap.push(QuantileCi {
            arm: m.arm,
            metric: "p95_latency_ms".to_string(),
            point: summary.p95_ms,
            ci,
        });
        corridors.push(ArmCorridors {
            arm: m.arm,
            corridors: metrics::error_corridors(records, corpus)?,
        });
        arms.push(summary);
    }

    let accuracy_tests = accuracy_family(&by_arm, meta, corpus, params.alpha)?;
    let latency_cost_tests = latency_cost_family(&by_arm, meta, params.alpha)?;

    let interim = interim_records
        .map(|r| interim_section(r, meta, corpus, params))
        .transpose()?;

    let pareto_points: Vec<ParetoPoint> = arms
        .iter()
        .map(|a| ParetoPoint {
            arm: a.arm.letter().to_string(),
            cost: a.mean_cost_usd,
            accuracy: a.accuracy,
        })
        .collect();

    let sig: Vec<PairwiseSignificance> = accuracy_tests
        .iter()
        .map(|t| PairwiseSignificance {
            left: t.left,
            right: t.right,
            p_value: t.p_value,
            rejected: t.rejected,
        })
        .collect();
    let gate_results: Vec<GateResult> =
        arms.iter().map(|s| viable_gate(s, &params.gates)).collect();
    let decision = decide(&arms, &params.gates, &sig)?;

    let control_sessions = by_arm.first().map(|r| r.len()).unwrap_or(0);
    Ok(AnalysisReport {
        alpha: params.alpha,
        gates: params.gates,
        corpus_digest: corpus.digest().to_string(),
        control_sessions,
        arms,
        accuracy_tests,
        latency_cost_tests,
        p95_bootstrap,
        corridors,
        pareto_frontier: metrics::pareto_frontier(&pareto_points),
        interim,
        gate_results,
        decision,
    })
}

// ---------------------------------------------------------------------------
// Benchmark mode: each backend once over every corpus case
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub corpus_digest: String,
    pub arms: Vec<ArmSummary>,
    pub accuracy_tests: Vec<AccuracyTest>,
}

/// Evaluates every backend sequentially, once per corpus case, and runs all
/// pairwise accuracy tests. The per-case latency draw is seeded per
/// (seed, backend, case), so reruns are identical.
pub fn bench(
    backends: &[BackendSpec],
    corpus: &Corpus,
    master_seed: u64,
    alpha: f64,
) -> Result<BenchReport, AnalysisError> {
    use crate::contract::{parse_response, ParseOutcome};
    use rand::SeedableRng;
    use sha2::{Digest, Sha256};

    let meta = arm_meta(backends);
    let mut by_arm: Vec<Vec<SessionRecord>> = vec![Vec::new()];
    for (i, backend) in backends.iter().enumerate() {
        let arm = ArmId(i + 1);
        let mut records = Vec::with_capacity(corpus.len());
        for case in corpus.cases() {
            let mut hasher = Sha256::new();
            hasher.update(master_seed.to_be_bytes());
            hasher.update(backend.name.as_bytes());
            hasher.update(case.case_id.as_bytes());
            let mut seed = [0u8; 32];
            seed.copy_from_slice(&hasher.finalize());
            let mut rng = rand_chacha::ChaCha12Rng::from_seed(seed);
            let invocation = backend
                .invoke(&case.case_id, &mut rng)
                .map_err(|_| AnalysisError::EmptyArm(arm))?;
            let outcome = parse_response(&invocation.raw_output);
            let (predicted_label, parse_failure, confidence) = match &outcome {
                ParseOutcome::Success(r) => (Some(r.label.to_string()), None, Some(r.confidence)),
                ParseOutcome::Failure { reason, .. } => {
                    (None, Some(reason.as_str().to_string()), None)
                }
            };
            records.push(SessionRecord {
                session_id: format!("bench-{}-{}", backend.name, case.case_id),
                arm,
                case_id: Some(case.case_id.clone()),
                predicted_label,
                parse_failure,
                confidence,
                latency_ms: invocation.latency_ms,
                cost_usd: invocation.cost_usd,
                timestamp: String::new(),
            });
        }
        by_arm.push(records);
    }

    let mut arms = Vec::new();
    for m in &meta {
        arms.push(metrics::summarize_arm(
            m.arm,
            &m.name,
            m.hosting,
            &by_arm[m.arm.0],
            corpus,
        )?);
    }
    let accuracy_tests = accuracy_family(&by_arm, &meta, corpus, alpha)?;
    Ok(BenchReport {
        corpus_digest: corpus.digest().to_string(),
        arms,
        accuracy_tests,
    })
}
