//! Viable-region gates and the deployment decision matrix.
//!
//! The gate is a joint threshold (accuracy >= 0.85 AND P95 <= 2000 ms by
//! default, both inclusive). The decision matrix maps arm summaries plus the
//! pre-registered pairwise significance results to exactly one of five
//! deployment actions, with a hosting-class tie-break (self-hosted >
//! serverless > API, then lowest cost, then arm letter).

use serde::{Deserialize, Serialize};

use crate::backends::HostingClass;
use crate::gateway::ArmId;
use crate::metrics::ArmSummary;

/// The pre-registered viable region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gates {
    pub min_accuracy: f64,
    pub max_p95_ms: f64,
}

impl Default for Gates {
    fn default() -> Self {
        Gates {
            min_accuracy: 0.85,
            max_p95_ms: 2000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateResult {
    pub arm: ArmId,
    pub accuracy_pass: bool,
    pub latency_pass: bool,
    pub viable: bool,
}

/// Pure inclusive threshold comparison against the viable region.
pub fn viable_gate(summary: &ArmSummary, gates: &Gates) -> GateResult {
    let accuracy_pass = summary.accuracy >= gates.min_accuracy;
    let latency_pass = summary.p95_ms <= gates.max_p95_ms;
    GateResult {
        arm: summary.arm,
        accuracy_pass,
        latency_pass,
        viable: accuracy_pass && latency_pass,
    }
}

/// One pairwise accuracy comparison with its multiplicity-adjusted verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseSignificance {
    pub left: ArmId,
    pub right: ArmId,
    pub p_value: f64,
    /// Holm-adjusted rejection at the family level.
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action")]
pub enum DecisionAction {
    DeploySlm { arm: ArmId },
    SlmPlusFallback { primary: ArmId, fallback: ArmId },
    ApiPrimarySlmFallback { primary: ArmId, fallback: ArmId },
    DeployCheapest { arm: ArmId },
    EliminateApiChooseSelfHosted { arm: ArmId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionOutcome {
    pub action: DecisionAction,
    /// Which matrix row fired (1-5).
    pub row_fired: u8,
    pub rationale: Vec<String>,
    pub gate_results: Vec<GateResult>,
}

#[derive(Debug, thiserror::Error)]
pub enum DecisionError {
    #[error("decision matrix requires at least one treatment arm")]
    NoTreatmentArms,
}

/// Hosting-class tie-break: self-hosted > serverless > API, then lowest mean
/// marginal cost, then arm letter.
pub fn apply_tiebreak<'a>(arms: &[&'a ArmSummary]) -> &'a ArmSummary {
    assert!(!arms.is_empty(), "tie-break requires candidates");
    arms.iter()
        .copied()
        .min_by(|a, b| {
            a.hosting
                .preference_rank()
                .cmp(&b.hosting.preference_rank())
                .then(a.mean_cost_usd.partial_cmp(&b.mean_cost_usd).unwrap())
                .then(a.arm.cmp(&b.arm))
        })
        .unwrap()
}

fn best_by_accuracy<'a>(arms: &[&'a ArmSummary]) -> &'a ArmSummary {
    let top = arms
        .iter()
        .map(|a| a.accuracy)
        .fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<&ArmSummary> = arms
        .iter()
        .copied()
        .filter(|a| a.accuracy == top)
        .collect();
    apply_tiebreak(&tied)
}

fn cheapest<'a>(arms: &[&'a ArmSummary]) -> &'a ArmSummary {
    let low = arms
        .iter()
        .map(|a| a.mean_cost_usd)
        .fold(f64::INFINITY, f64::min)
        .min(f64::INFINITY);
    let tied: Vec<&ArmSummary> = arms
        .iter()
        .copied()
        .filter(|a| a.mean_cost_usd == low)
        .collect();
    apply_tiebreak(&tied)
}

/// True when `winner` has a Holm-rejected accuracy win over any other arm.
fn has_material_lead(
    winner: &ArmSummary,
    summaries: &[ArmSummary],
    sig: &[PairwiseSignificance],
) -> bool {
    sig.iter().filter(|s| s.rejected).any(|s| {
        let other = if s.left == winner.arm {
            Some(s.right)
        } else if s.right == winner.arm {
            Some(s.left)
        } else {
            None
        };
        match other {
            Some(o) => summaries
                .iter()
                .find(|a| a.arm == o)
                .map(|a| winner.accuracy > a.accuracy)
                .unwrap_or(false),
            None => false,
        }
    })
}

/// Applies the decision matrix. Pure function of its inputs: the same
/// summaries, gates, and significance results always yield the same action
/// and the same rationale trace.
///
/// Evaluation order: if no pairwise accuracy difference is Holm-rejected,
/// all arms count as similar quality and the cheapest wins (row 4, with the
/// hosting tie-break). Otherwise the quality winner is examined: an API
/// quality winner with a cheaper self-hosted alternative selects the
/// fallback pattern (row 2) when its lead is material, and elimination
/// (row 5) when it also fails the latency gate without a material lead. An
/// arm winning both quality and cost deploys outright (row 1 self-hosted /
/// serverless, row 3 API).
pub fn decide(
    summaries: &[ArmSummary],
    gates: &Gates,
    sig: &[PairwiseSignificance],
) -> Result<DecisionOutcome, DecisionError> {
    if summaries.is_empty() {
        return Err(DecisionError::NoTreatmentArms);
    }
    let gate_results: Vec<GateResult> = summaries.iter().map(|s| viable_gate(s, gates)).collect();
    let all: Vec<&ArmSummary> = summaries.iter().collect();
    let mut rationale = Vec::new();

    let cost_winner = cheapest(&all);
    let quality_winner = best_by_accuracy(&all);
    rationale.push(format!(
        "cost winner: arm {} ({}, mean ${:.6}/request)",
        cost_winner.arm, cost_winner.backend, cost_winner.mean_cost_usd
    ));
    rationale.push(format!(
        "quality winner: arm {} ({}, accuracy {:.4})",
        quality_winner.arm, quality_winner.backend, quality_winner.accuracy
    ));

    let any_rejected = sig.iter().any(|s| s.rejected);
    if !any_rejected {
        rationale.push(
            "no pairwise accuracy difference is Holm-rejected: all arms similar quality".into(),
        );
        rationale.push(format!(
            "row 4: deploy cheapest arm {} via hosting tie-break",
            cost_winner.arm
        ));
        return Ok(DecisionOutcome {
            action: DecisionAction::DeployCheapest {
                arm: cost_winner.arm,
            },
            row_fired: 4,
            rationale,
            gate_results,
        });
    }
    rationale.push("at least one pairwise accuracy difference is Holm-rejected".into());

    let self_hosted: Vec<&ArmSummary> = all
        .iter()
        .copied()
        .filter(|a| a.hosting == HostingClass::SelfHosted)
        .collect();

    if quality_winner.arm == cost_winner.arm {
        return Ok(if quality_winner.hosting == HostingClass::Api {
            let fallback = {
                let others: Vec<&ArmSummary> = all
                    .iter()
                    .copied()
                    .filter(|a| a.arm != quality_winner.arm)
                    .collect();
                if others.is_empty() {
                    quality_winner
                } else {
                    best_by_accuracy(&others)
                }
            };
            rationale.push(format!(
                "row 3: API arm {} wins both quality and cost; arm {} as fallback",
                quality_winner.arm, fallback.arm
            ));
            DecisionOutcome {
                action: DecisionAction::ApiPrimarySlmFallback {
                    primary: quality_winner.arm,
                    fallback: fallback.arm,
                },
                row_fired: 3,
                rationale,
                gate_results,
            }
        } else {
            rationale.push(format!(
                "row 1: arm {} wins both quality and cost",
                quality_winner.arm
            ));
            DecisionOutcome {
                action: DecisionAction::DeploySlm {
                    arm: quality_winner.arm,
                },
                row_fired: 1,
                rationale,
                gate_results,
            }
        });
    }

    if quality_winner.hosting == HostingClass::Api {
        let cheaper_self_hosted: Vec<&ArmSummary> = self_hosted
            .iter()
            .copied()
            .filter(|a| a.mean_cost_usd < quality_winner.mean_cost_usd)
            .collect();
        if !cheaper_self_hosted.is_empty() {
            let primary = best_by_accuracy(&cheaper_self_hosted);
            let api_gate = gate_results
                .iter()
                .find(|g| g.arm == quality_winner.arm)
                .expect("gate computed for every arm");
            let material = has_material_lead(quality_winner, summaries, sig);
            if !api_gate.latency_pass && !material {
                rationale.push(format!(
                    "row 5: API arm {} fails the latency gate with no Holm-rejected quality win; \
                     eliminate it and choose self-hosted arm {}",
                    quality_winner.arm, primary.arm
                ));
                return Ok(DecisionOutcome {
                    action: DecisionAction::EliminateApiChooseSelfHosted { arm: primary.arm },
                    row_fired: 5,
                    rationale,
                    gate_results,
                });
            }
            rationale.push(format!(
                "row 2: API arm {} holds a material quality lead; self-hosted arm {} as primary \
                 with arm {} as selective fallback",
                quality_winner.arm, primary.arm, quality_winner.arm
            ));
            return Ok(DecisionOutcome {
                action: DecisionAction::SlmPlusFallback {
                    primary: primary.arm,
                    fallback: quality_winner.arm,
                },
                row_fired: 2,
                rationale,
                gate_results,
            });
        }
        let others: Vec<&ArmSummary> = all
            .iter()
            .copied()
            .filter(|a| a.arm != quality_winner.arm)
            .collect();
        let fallback = best_by_accuracy(&others);
        rationale.push(format!(
            "row 3: API arm {} wins quality and no cheaper self-hosted arm exists; arm {} as \
             fallback",
            quality_winner.arm, fallback.arm
        ));
        return Ok(DecisionOutcome {
            action: DecisionAction::ApiPrimarySlmFallback {
                primary: quality_winner.arm,
                fallback: fallback.arm,
            },
            row_fired: 3,
            rationale,
            gate_results,
        });
    }

    // Non-API quality winner that is not the cost winner: a material quality
    // lead still deploys the winner outright.
    rationale.push(format!(
        "row 1: arm {} wins quality with a Holm-rejected difference present",
        quality_winner.arm
    ));
    Ok(DecisionOutcome {
        action: DecisionAction::DeploySlm {
            arm: quality_winner.arm,
        },
        row_fired: 1,
        rationale,
        gate_results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn summary(
        arm: usize,
        name: &str,
        hosting: HostingClass,
        accuracy: f64,
        p95_ms: f64,
        mean_cost_usd: f64,
    ) -> ArmSummary {
        ArmSummary {
            arm: ArmId(arm),
            backend: name.into(),
            hosting,
            accuracy,
            accuracy_parseable: accuracy,
            parse_rate: 1.0,
            f1_macro: accuracy,
            per_family_accuracy: BTreeMap::new(),
            median_ms: p95_ms * 0.8,
            p95_ms,
            total_cost_usd: mean_cost_usd * 400.0,
            mean_cost_usd,
            n_sessions: 400,
            n_eff: 60,
        }
    }

    /// The published three-treatment-arm endpoint table.
    fn study_arms() -> Vec<ArmSummary> {
        vec![
            summary(1, "b-serverless", HostingClass::Serverless, 0.518, 1541.0, 0.0),
            summary(2, "c-selfhosted", HostingClass::SelfHosted, 0.793, 1170.0, 0.0),
            summary(3, "d-api", HostingClass::Api, 0.830, 2295.0, 0.000085),
        ]
    }

    #[test]
    fn gate_fixture_all_three_arms_fail() {
        let gates = Gates::default();
        for arm in study_arms() {
            let g = viable_gate(&arm, &gates);
            assert!(!g.viable, "arm {} must fail the viable region", arm.arm);
        }
        // Named sub-cases: C passes latency but fails accuracy; D fails both.
        let arms = study_arms();
        let c = viable_gate(&arms[1], &gates);
        assert!(!c.accuracy_pass && c.latency_pass);
        let d = viable_gate(&arms[2], &gates);
        assert!(!d.accuracy_pass && !d.latency_pass);
    }

    #[test]
    fn gate_boundaries_are_inclusive() {
        let gates = Gates::default();
        let exact = summary(1, "x", HostingClass::SelfHosted, 0.85, 2000.0, 0.0);
        assert!(viable_gate(&exact, &gates).viable);
        let below = summary(1, "x", HostingClass::SelfHosted, 0.85 - 1e-12, 2000.0, 0.0);
        assert!(!viable_gate(&below, &gates).accuracy_pass);
        let slow = summary(1, "x", HostingClass::SelfHosted, 0.85, 2000.0 + 1e-9, 0.0);
        assert!(!viable_gate(&slow, &gates).latency_pass);
    }

    fn sig(pairs: &[(usize, usize, f64, bool)]) -> Vec<PairwiseSignificance> {
        pairs
            .iter()
            .map(|&(l, r, p, rej)| PairwiseSignificance {
                left: ArmId(l),
                right: ArmId(r),
                p_value: p,
                rejected: rej,
            })
            .collect()
    }

    #[test]
    fn decision_fixture_slm_plus_fallback() {
        // The API arm's quality lead over the serverless arm is material;
        // its lead over the self-hosted arm is not. Row 2 still fires.
        let outcome = decide(
            &study_arms(),
            &Gates::default(),
            &sig(&[
                (1, 2, 3.1e-5, true),
                (1, 3, 3.8e-6, true),
                (2, 3, 0.25, false),
            ]),
        )
        .unwrap();
        assert_eq!(outcome.row_fired, 2);
        assert_eq!(
            outcome.action,
            DecisionAction::SlmPlusFallback {
                primary: ArmId(2),
                fallback: ArmId(3)
            }
        );
        assert!(outcome.rationale.iter().any(|r| r.contains("row 2")));
        assert!(outcome.gate_results.iter().all(|g| !g.viable));
    }

    #[test]
    fn all_similar_deploys_cheapest_with_hosting_tiebreak() {
        let arms = vec![
            summary(1, "b", HostingClass::Serverless, 0.80, 1000.0, 0.0),
            summary(2, "c", HostingClass::SelfHosted, 0.79, 1100.0, 0.0),
            summary(3, "d", HostingClass::Api, 0.81, 1200.0, 0.0),
        ];
        let outcome = decide(
            &arms,
            &Gates::default(),
            &sig(&[
                (1, 2, 0.8, false),
                (1, 3, 0.7, false),
                (2, 3, 0.6, false),
            ]),
        )
        .unwrap();
        assert_eq!(outcome.row_fired, 4);
        // Zero-cost three-way tie: self-hosted preferred.
        assert_eq!(outcome.action, DecisionAction::DeployCheapest { arm: ArmId(2) });
    }

    #[test]
    fn self_hosted_double_winner_deploys() {
        let arms = vec![
            summary(1, "c", HostingClass::SelfHosted, 0.90, 900.0, 0.0),
            summary(2, "d", HostingClass::Api, 0.70, 2500.0, 0.001),
        ];
        let outcome = decide(
            &arms,
            &Gates::default(),
            &sig(&[(1, 2, 0.001, true)]),
        )
        .unwrap();
        assert_eq!(outcome.row_fired, 1);
        assert_eq!(outcome.action, DecisionAction::DeploySlm { arm: ArmId(1) });
    }

    #[test]
    fn api_eliminated_when_slow_without_material_lead() {
        // API nominally highest accuracy but no rejected win, and it fails
        // the latency gate; the cheap-vs-serverless pair drives the only
        // rejection.
        let arms = vec![
            summary(1, "b", HostingClass::Serverless, 0.50, 1000.0, 0.0),
            summary(2, "c", HostingClass::SelfHosted, 0.82, 1100.0, 0.0),
            summary(3, "d", HostingClass::Api, 0.83, 2500.0, 0.001),
        ];
        let outcome = decide(
            &arms,
            &Gates::default(),
            &sig(&[
                (1, 2, 0.0001, true),
                (1, 3, 0.06, false),
                (2, 3, 0.9, false),
            ]),
        )
        .unwrap();
        assert_eq!(outcome.row_fired, 5);
        assert_eq!(
            outcome.action,
            DecisionAction::EliminateApiChooseSelfHosted { arm: ArmId(2) }
        );
    }

    #[test]
    fn api_double_winner_keeps_slm_fallback() {
        let arms = vec![
            summary(1, "c", HostingClass::SelfHosted, 0.60, 900.0, 0.002),
            summary(2, "d", HostingClass::Api, 0.90, 1500.0, 0.001),
        ];
        let outcome = decide(&arms, &Gates::default(), &sig(&[(1, 2, 0.001, true)])).unwrap();
        assert_eq!(outcome.row_fired, 3);
        assert_eq!(
            outcome.action,
            DecisionAction::ApiPrimarySlmFallback {
                primary: ArmId(2),
                fallback: ArmId(1)
            }
        );
    }

    #[test]
    fn decide_is_deterministic_and_total() {
        let arms = study_arms();
        let s = sig(&[
            (1, 2, 3.1e-5, true),
            (1, 3, 3.8e-6, true),
            (2, 3, 0.25, false),
        ]);
        let a = decide(&arms, &Gates::default(), &s).unwrap();
        let b = decide(&arms, &Gates::default(), &s).unwrap();
        assert_eq!(a, b, "same inputs, same outcome and rationale");
        assert!(matches!(
            decide(&[], &Gates::default(), &[]),
            Err(DecisionError::NoTreatmentArms)
        ));
    }

    #[test]
    fn tiebreak_order() {
        let b = summary(1, "b", HostingClass::Serverless, 0.5, 1000.0, 0.0);
        let c = summary(2, "c", HostingClass::SelfHosted, 0.5, 1000.0, 0.0);
        assert_eq!(apply_tiebreak(&[&b, &c]).arm, ArmId(2));
        assert_eq!(apply_tiebreak(&[&b]).arm, ArmId(1));
        // Same class, same cost: lowest arm letter.
        let c2 = summary(3, "c2", HostingClass::SelfHosted, 0.5, 1000.0, 0.0);
        assert_eq!(apply_tiebreak(&[&c2, &c]).arm, ArmId(2));
        // Same class, different cost: cheaper wins over letter order.
        let c_cheap = summary(4, "c3", HostingClass::SelfHosted, 0.5, 1000.0, 0.0);
        let c_dear = summary(2, "c", HostingClass::SelfHosted, 0.5, 1000.0, 0.01);
        assert_eq!(apply_tiebreak(&[&c_dear, &c_cheap]).arm, ArmId(4));
    }
}
