//! The frozen classification I/O contract.
//!
//! Every backend receives the same system prompt and must answer with a
//! single JSON object `{"label": <canonical label>, "confidence": <0..1>}`.
//! Parsing is strict: exactly those two keys, a canonical label string, and
//! a finite confidence in [0, 1]. Anything else is a failure, and failures
//! are scored as classification errors downstream.

use serde::{Deserialize, Serialize};

use crate::corpus::{parse_label, Case, TaskLabel};

/// The frozen system prompt, byte-identical across all backends and both
/// run modes.
pub const SYSTEM_PROMPT: &str = "You are a task classifier for an AI routing system.
Classify the prompt into exactly one of these categories:
- code/simple (single function, snippet, trivial script)
- code/complex (multi-file, architecture-level, tests required)
- CoT/simple (single-step explanation or reasoning)
- CoT/complex (multi-step reasoning, trade-off analysis)
- hybrid/agentic (autonomous execution, self-healing,
  multi-artifact, no-confirmation)
- hybrid/generative (mixed creative + structured output)

Key rule: autonomous mode + no confirmation + multi-artifact = hybrid/agentic.

Respond with JSON only: {\"label\": \"<label>\", \"confidence\": <0.0-1.0>}";

/// A schema-valid classifier answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierResponse {
    pub label: TaskLabel,
    pub confidence: f64,
}

impl ClassifierResponse {
    /// Serializes to the contract wire format.
    pub fn to_contract_json(&self) -> String {
        format!(
            "{{\"label\": \"{}\", \"confidence\": {}}}",
            self.label,
            // Keep a decimal point so the round-trip stays a JSON number.
            if self.confidence.fract() == 0.0 {
                format!("{:.1}", self.confidence)
            } else {
                format!("{}", self.confidence)
            }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    NoJsonObject,
    BadSchema,
    UnknownLabel,
    ConfidenceOutOfRange,
}

impl FailureReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            FailureReason::NoJsonObject => "no_json_object",
            FailureReason::BadSchema => "bad_schema",
            FailureReason::UnknownLabel => "unknown_label",
            FailureReason::ConfidenceOutOfRange => "confidence_out_of_range",
        }
    }
}

/// Result of parsing a raw backend response. Failures retain the raw text
/// for audit logs.
#[derive(Debug, Clone, PartialEq)]
pub enum ParseOutcome {
    Success(ClassifierResponse),
    Failure { reason: FailureReason, raw: String },
}

impl ParseOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, ParseOutcome::Success(_))
    }

    pub fn label(&self) -> Option<TaskLabel> {
        match self {
            ParseOutcome::Success(r) => Some(r.label),
            ParseOutcome::Failure { .. } => None,
        }
    }
}

/// Parses a raw model response against the contract.
///
/// The first syntactically complete JSON object found by a left-to-right,
/// string-aware, brace-balanced scan is the candidate; leading or trailing
/// prose around it is tolerated. A single surrounding triple-backtick fence
/// is stripped before scanning. Total and deterministic; never panics.
pub fn parse_response(raw: &str) -> ParseOutcome {
    let scan = strip_fence(raw);
    let value = match first_json_object(scan) {
        Some(v) => v,
        None => {
            return ParseOutcome::Failure {
                reason: FailureReason::NoJsonObject,
                raw: raw.to_string(),
            }
        }
    };
    let obj = match value.as_object() {
        Some(o) => o,
        None => {
            return ParseOutcome::Failure {
                reason: FailureReason::NoJsonObject,
                raw: raw.to_string(),
            }
        }
    };
    // Exactly the two contract keys; extra keys signal contract drift.
    if obj.len() != 2 || !obj.contains_key("label") || !obj.contains_key("confidence") {
        return ParseOutcome::Failure {
            reason: FailureReason::BadSchema,
            raw: raw.to_string(),
        };
    }
    let label_str = match obj["label"].as_str() {
        Some(s) => s,
        None => {
            return ParseOutcome::Failure {
                reason: FailureReason::BadSchema,
                raw: raw.to_string(),
            }
        }
    };
    let label = match parse_label(label_str) {
        Ok(l) => l,
        Err(_) => {
            return ParseOutcome::Failure {
                reason: FailureReason::UnknownLabel,
                raw: raw.to_string(),
            }
        }
    };
    let confidence = match obj["confidence"].as_f64() {
        Some(c) => c,
        None => {
            return ParseOutcome::Failure {
                reason: FailureReason::BadSchema,
                raw: raw.to_string(),
            }
        }
    };
    if !confidence.is_finite() || !(0.0..=1.0).contains(&confidence) {
        return ParseOutcome::Failure {
            reason: FailureReason::ConfidenceOutOfRange,
            raw: raw.to_string(),
        };
    }
    ParseOutcome::Success(ClassifierResponse { label, confidence })
}

/// Correct iff the outcome is a schema-valid response whose label equals the
/// case's ground truth. Every failure is incorrect; no partial credit.
pub fn score_prediction(case: &Case, outcome: &ParseOutcome) -> bool {
    match outcome {
        ParseOutcome::Success(r) => r.label == case.ground_truth,
        ParseOutcome::Failure { .. } => false,
    }
}

/// Strips one surrounding ``` fence (with optional language tag) if present.
fn strip_fence(raw: &str) -> &str {
    let t = raw.trim();
    if let Some(rest) = t.strip_prefix("```") {
        if let Some(inner) = rest.strip_suffix("```") {
            // Drop an optional language tag on the opening fence line.
            let inner = match inner.split_once('\n') {
                Some((first, body)) if !first.contains('{') => body,
                _ => inner,
            };
            return inner;
        }
    }
    raw
}

/// Finds the first brace-balanced span that parses as a JSON value, scanning
/// left to right and honoring string literals and escapes.
fn first_json_object(s: &str) -> Option<serde_json::Value> {
    let bytes = s.as_bytes();
    let mut start = 0;
    while let Some(open) = s[start..].find('{').map(|i| i + start) {
        let mut depth = 0usize;
        let mut in_string = false;
        let mut escaped = false;
        let mut end = None;
        for (i, &b) in bytes.iter().enumerate().skip(open) {
            if in_string {
                if escaped {
                    escaped = false;
                } else if b == b'\\' {
                    escaped = true;
                } else if b == b'"' {
                    in_string = false;
                }
                continue;
            }
            match b {
                b'"' => in_string = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(i);
                        break;
                    }
                }
                _ => {}
            }
        }
        // Unbalanced tail: no complete object exists from here on.
        let end = end?;
        if let Ok(v) = serde_json::from_str::<serde_json::Value>(&s[open..=end]) {
            return Some(v);
        }
        start = open + 1;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TaskLabel;
    use proptest::prelude::*;

    fn case(truth: TaskLabel) -> Case {
        Case {
            case_id: "T-001".into(),
            prompt: "p".into(),
            ground_truth: truth,
        }
    }

    #[test]
    fn well_formed_response() {
        let out = parse_response("{\"label\": \"CoT/simple\", \"confidence\": 0.9}");
        assert_eq!(
            out,
            ParseOutcome::Success(ClassifierResponse {
                label: TaskLabel::CotSimple,
                confidence: 0.9
            })
        );
    }

    #[test]
    fn prose_around_object_tolerated() {
        let out = parse_response(
            "Sure! {\"label\": \"code/complex\", \"confidence\": 1.0} Hope this helps.",
        );
        assert_eq!(
            out.label(),
            Some(TaskLabel::CodeComplex),
            "first balanced object wins"
        );
    }

    #[test]
    fn fenced_object_tolerated() {
        let out = parse_response("```json\n{\"label\": \"code/simple\", \"confidence\": 0.5}\n```");
        assert_eq!(out.label(), Some(TaskLabel::CodeSimple));
    }

    #[test]
    fn non_member_label_fails() {
        let out = parse_response("{\"label\": \"code/medium\", \"confidence\": 0.8}");
        assert!(
            matches!(out, ParseOutcome::Failure { reason: FailureReason::UnknownLabel, ref raw }
                if raw.contains("code/medium"))
        );
    }

    #[test]
    fn extra_keys_are_bad_schema() {
        let out =
            parse_response("{\"label\": \"code/simple\", \"confidence\": 0.8, \"why\": \"x\"}");
        assert!(matches!(
            out,
            ParseOutcome::Failure {
                reason: FailureReason::BadSchema,
                ..
            }
        ));
    }

    #[test]
    fn missing_and_unbalanced_json() {
        assert!(matches!(
            parse_response("no json here"),
            ParseOutcome::Failure {
                reason: FailureReason::NoJsonObject,
                ..
            }
        ));
        assert!(matches!(
            parse_response("{\"label\": \"CoT/simple\", \"confidence\": "),
            ParseOutcome::Failure {
                reason: FailureReason::NoJsonObject,
                ..
            }
        ));
    }

    #[test]
    fn confidence_bounds() {
        assert!(parse_response("{\"label\": \"code/simple\", \"confidence\": 0.0}").is_success());
        assert!(parse_response("{\"label\": \"code/simple\", \"confidence\": 1.0}").is_success());
        assert!(matches!(
            parse_response("{\"label\": \"code/simple\", \"confidence\": 1.5}"),
            ParseOutcome::Failure {
                reason: FailureReason::ConfidenceOutOfRange,
                ..
            }
        ));
    }

    #[test]
    fn invalid_then_valid_object() {
        let out = parse_response("{oops} then {\"label\": \"CoT/complex\", \"confidence\": 1.0}");
        assert_eq!(out.label(), Some(TaskLabel::CotComplex));
    }

    #[test]
    fn scoring_is_exact_match() {
        let ok = parse_response("{\"label\": \"CoT/simple\", \"confidence\": 1.0}");
        assert!(score_prediction(&case(TaskLabel::CotSimple), &ok));
        // Table-8 style cross-family miss: no partial credit.
        let miss = parse_response("{\"label\": \"hybrid/agentic\", \"confidence\": 1.0}");
        assert!(!score_prediction(&case(TaskLabel::CodeComplex), &miss));
        let fail = ParseOutcome::Failure {
            reason: FailureReason::NoJsonObject,
            raw: "garbage".into(),
        };
        assert!(!score_prediction(&case(TaskLabel::CodeSimple), &fail));
    }

    proptest! {
        #[test]
        fn contract_round_trip(label_idx in 0usize..6, conf in 0.0f64..=1.0) {
            let resp = ClassifierResponse { label: TaskLabel::ALL[label_idx], confidence: conf };
            let parsed = parse_response(&resp.to_contract_json());
            prop_assert_eq!(parsed, ParseOutcome::Success(resp));
        }

        #[test]
        fn parse_is_total(raw in ".{0,200}") {
            // Must never panic, whatever the input.
            let _ = parse_response(&raw);
        }
    }
}
