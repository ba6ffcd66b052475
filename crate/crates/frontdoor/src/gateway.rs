//! The front-door routing service.
//!
//! Arm assignment is the full SHA-256 digest of the session id, read as a
//! big-endian unsigned integer, mod k — deterministic across processes, no
//! mid-session switches. Request handling invokes the assigned backend with
//! the frozen system prompt, parses the response, and appends one record to
//! the session log before returning. Arm 0 is the pass-through control.

use std::fmt;
use std::io::Write;
use std::sync::Mutex;

use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::{BackendError, BackendSpec};
use crate::contract::{parse_response, ParseOutcome};

/// An experiment arm, index 0..k-1, displayed as a letter (A, B, C, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ArmId(pub usize);

impl ArmId {
    pub fn letter(&self) -> char {
        (b'A' + (self.0 as u8)) as char
    }

    pub fn from_letter(c: char) -> Option<ArmId> {
        if c.is_ascii_uppercase() {
            Some(ArmId((c as u8 - b'A') as usize))
        } else {
            None
        }
    }
}

impl fmt::Display for ArmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl Serialize for ArmId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.letter().to_string())
    }
}

impl<'de> Deserialize<'de> for ArmId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => {
                ArmId::from_letter(c).ok_or_else(|| serde::de::Error::custom("bad arm letter"))
            }
            _ => Err(serde::de::Error::custom("bad arm letter")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("session_id must be nonempty")]
    EmptySessionId,
    #[error("gateway requires at least one arm")]
    NoArms,
    #[error("backend error: {0}")]
    Backend(#[from] BackendError),
    #[error("log io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Deterministic arm assignment: SHA-256(session_id) as a big-endian
/// integer, mod k.
pub fn assign_arm(session_id: &str, k: usize) -> Result<usize, GatewayError> {
    if session_id.is_empty() {
        return Err(GatewayError::EmptySessionId);
    }
    assert!(k >= 1, "k must be >= 1");
    let digest = Sha256::digest(session_id.as_bytes());
    // Fold the 256-bit big-endian integer mod k byte by byte.
    let k = k as u128;
    let mut acc: u128 = 0;
    for &b in digest.iter() {
        acc = ((acc << 8) | b as u128) % k;
    }
    Ok(acc as usize)
}

/// One routed request. `case_id` is present in synthetic traffic so the
/// record can be scored offline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoutingRequest {
    pub session_id: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case_id: Option<String>,
}

/// One routed request's full observation, in the session-log wire schema.
///
/// Control records carry no prediction fields and zero classifier overhead.
/// Treatment parse failures carry the failure reason in `parse_failure`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub arm: ArmId,
    pub case_id: Option<String>,
    pub predicted_label: Option<String>,
    pub parse_failure: Option<String>,
    pub confidence: Option<f64>,
    pub latency_ms: f64,
    pub cost_usd: f64,
    pub timestamp: String,
}

impl SessionRecord {
    /// Control records are pass-through: no prediction and no failure.
    pub fn is_control(&self) -> bool {
        self.predicted_label.is_none() && self.parse_failure.is_none()
    }
}

/// One arm of a configured gateway. `backend` is `None` for the control.
pub struct Arm {
    pub id: ArmId,
    pub backend: Option<BackendSpec>,
}

/// Per-arm readiness, reported by the health endpoint.
#[derive(Debug, Clone, Serialize)]
pub struct ArmHealth {
    pub arm: ArmId,
    pub backend: Option<String>,
    pub trace_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct HealthReport {
    pub status: String,
    pub arms: Vec<ArmHealth>,
}

enum LogSink {
    Memory,
    File(std::io::BufWriter<std::fs::File>),
}

struct SessionLog {
    sink: LogSink,
    lines: Vec<String>,
}

/// The front-door service. Immutable after construction except for the
/// append-only log, which is serialized behind a single writer lock.
pub struct Gateway {
    arms: Vec<Arm>,
    master_seed: u64,
    expected_case_ids: Vec<String>,
    log: Mutex<SessionLog>,
}

impl Gateway {
    /// `expected_case_ids` is the corpus coverage the health check verifies.
    pub fn new(
        arms: Vec<Arm>,
        master_seed: u64,
        expected_case_ids: Vec<String>,
    ) -> Result<Self, GatewayError> {
        if arms.is_empty() {
            return Err(GatewayError::NoArms);
        }
        Ok(Gateway {
            arms,
            master_seed,
            expected_case_ids,
            log: Mutex::new(SessionLog {
                sink: LogSink::Memory,
                lines: Vec::new(),
            }),
        })
    }

    /// Redirects log appends to a file (records are still kept in memory).
    pub fn log_to_file(&self, path: impl AsRef<std::path::Path>) -> Result<(), GatewayError> {
        let file = std::fs::File::create(path)?;
        let mut log = self.log.lock().unwrap();
        log.sink = LogSink::File(std::io::BufWriter::new(file));
        Ok(())
    }

    pub fn arm_count(&self) -> usize {
        self.arms.len()
    }

    /// The RNG stream for one session, derived from (master seed, session
    /// id) so concurrent and sequential execution sample identically.
    pub fn session_rng(&self, session_id: &str) -> ChaCha12Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.master_seed.to_be_bytes());
        hasher.update(session_id.as_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        rand::SeedableRng::from_seed(seed)
    }

    /// Assigns the arm, invokes the backend (treatment arms), parses the
    /// response, and appends the record to the log before returning.
    ///
    /// A missing trace entry is logged as a failure record, not a dropped
    /// request.
    pub fn handle_request(&self, req: &RoutingRequest) -> Result<SessionRecord, GatewayError> {
        let idx = assign_arm(&req.session_id, self.arms.len())?;
        let arm = &self.arms[idx];
        let timestamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);

        let record = match &arm.backend {
            None => SessionRecord {
                session_id: req.session_id.clone(),
                arm: arm.id,
                case_id: req.case_id.clone(),
                predicted_label: None,
                parse_failure: None,
                confidence: None,
                latency_ms: 0.0,
                cost_usd: 0.0,
                timestamp,
            },
            Some(backend) => {
                let mut rng = self.session_rng(&req.session_id);
                let case_id = req.case_id.as_deref().unwrap_or("");
                match backend.invoke(case_id, &mut rng) {
                    Ok(invocation) => {
                        let outcome = parse_response(&invocation.raw_output);
                        let (predicted_label, parse_failure, confidence) = match &outcome {
                            ParseOutcome::Success(r) => {
                                (Some(r.label.to_string()), None, Some(r.confidence))
                            }
                            ParseOutcome::Failure { reason, .. } => {
                                (None, Some(reason.as_str().to_string()), None)
                            }
                        };
                        SessionRecord {
                            session_id: req.session_id.clone(),
                            arm: arm.id,
                            case_id: req.case_id.clone(),
                            predicted_label,
                            parse_failure,
                            confidence,
                            latency_ms: invocation.latency_ms,
                            cost_usd: invocation.cost_usd,
                            timestamp,
                        }
                    }
                    Err(BackendError::MissingTraceEntry(_)) => SessionRecord {
                        session_id: req.session_id.clone(),
                        arm: arm.id,
                        case_id: req.case_id.clone(),
                        predicted_label: None,
                        parse_failure: Some("missing_trace_entry".to_string()),
                        confidence: None,
                        latency_ms: backend.latency.sample(&mut rng),
                        cost_usd: backend.marginal_cost_usd,
                        timestamp,
                    },
                    Err(e) => return Err(e.into()),
                }
            }
        };

        self.append(&record)?;
        Ok(record)
    }

    fn append(&self, record: &SessionRecord) -> Result<(), GatewayError> {
        let line = serde_json::to_string(record).expect("record serializes");
        let mut log = self.log.lock().unwrap();
        if let LogSink::File(w) = &mut log.sink {
            writeln!(w, "{line}")?;
            w.flush()?;
        }
        log.lines.push(line);
        Ok(())
    }

    pub fn log_lines(&self) -> Vec<String> {
        self.log.lock().unwrap().lines.clone()
    }

    /// Per-arm readiness: ok iff every treatment backend's trace covers the
    /// configured corpus.
    pub fn health(&self) -> HealthReport {
        let arms: Vec<ArmHealth> = self
            .arms
            .iter()
            .map(|arm| {
                let trace_ok = match &arm.backend {
                    None => true,
                    Some(b) => b.covers(self.expected_case_ids.iter().map(|s| s.as_str())),
                };
                ArmHealth {
                    arm: arm.id,
                    backend: arm.backend.as_ref().map(|b| b.name.clone()),
                    trace_ok,
                }
            })
            .collect();
        let status = if arms.iter().all(|a| a.trace_ok) {
            "ok"
        } else {
            "degraded"
        };
        HealthReport {
            status: status.to_string(),
            arms,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{fit_latency_model, DecodeBudget, HostingClass, TraceEntry};
    use std::collections::BTreeMap;

    #[test]
    fn assignment_pinned_vectors() {
        // Computed with an independent SHA-256 big-integer-mod oracle.
        assert_eq!(assign_arm("session-000001", 4).unwrap(), 3);
        assert_eq!(assign_arm("session-000002", 4).unwrap(), 3);
        assert_eq!(assign_arm("alpha", 4).unwrap(), 0);
        assert_eq!(assign_arm("beta", 4).unwrap(), 3);
        assert_eq!(assign_arm("s-42", 4).unwrap(), 1);
        assert_eq!(assign_arm("session-000001", 7).unwrap(), 5);
        assert_eq!(assign_arm("alpha", 7).unwrap(), 6);
        assert_eq!(assign_arm("beta", 7).unwrap(), 3);
    }

    #[test]
    fn assignment_edges() {
        assert_eq!(assign_arm("anything", 1).unwrap(), 0);
        assert_eq!(
            assign_arm("stable-id", 4).unwrap(),
            assign_arm("stable-id", 4).unwrap()
        );
        assert!(matches!(
            assign_arm("", 4),
            Err(GatewayError::EmptySessionId)
        ));
    }

    fn backend(name: &str, cases: &[(&str, &str)]) -> BackendSpec {
        let mut trace = BTreeMap::new();
        for (id, label) in cases {
            trace.insert(
                id.to_string(),
                TraceEntry {
                    case_id: id.to_string(),
                    raw_output: format!("{{\"label\": \"{label}\", \"confidence\": 1.0}}"),
                },
            );
        }
        BackendSpec {
            name: name.into(),
            hosting: HostingClass::SelfHosted,
            marginal_cost_usd: 0.0,
            latency: fit_latency_model(100.0, 150.0).unwrap(),
            trace,
            decode: DecodeBudget::default(),
        }
    }

    fn two_arm_gateway() -> Gateway {
        Gateway::new(
            vec![
                Arm {
                    id: ArmId(0),
                    backend: None,
                },
                Arm {
                    id: ArmId(1),
                    backend: Some(backend("b1", &[("T-001", "code/simple")])),
                },
            ],
            7,
            vec!["T-001".to_string()],
        )
        .unwrap()
    }

    fn request_for_arm(gw_arms: usize, target: usize) -> RoutingRequest {
        let mut n = 0;
        loop {
            let id = format!("probe-{n}");
            if assign_arm(&id, gw_arms).unwrap() == target {
                return RoutingRequest {
                    session_id: id,
                    prompt: "p".into(),
                    case_id: Some("T-001".into()),
                };
            }
            n += 1;
        }
    }

    #[test]
    fn control_records_are_pass_through() {
        let gw = two_arm_gateway();
        let rec = gw.handle_request(&request_for_arm(2, 0)).unwrap();
        assert!(rec.is_control());
        assert_eq!(rec.latency_ms, 0.0);
        assert_eq!(rec.cost_usd, 0.0);
    }

    #[test]
    fn treatment_records_carry_prediction_and_latency() {
        let gw = two_arm_gateway();
        let rec = gw.handle_request(&request_for_arm(2, 1)).unwrap();
        assert_eq!(rec.predicted_label.as_deref(), Some("code/simple"));
        assert!(rec.latency_ms > 0.0);
        // Same session id twice: same arm, identical prediction.
        let again = gw
            .handle_request(&RoutingRequest {
                session_id: rec.session_id.clone(),
                prompt: "p".into(),
                case_id: Some("T-001".into()),
            })
            .unwrap();
        assert_eq!(again.arm, rec.arm);
        assert_eq!(again.predicted_label, rec.predicted_label);
    }

    #[test]
    fn missing_trace_entry_logged_not_dropped() {
        let gw = two_arm_gateway();
        let mut req = request_for_arm(2, 1);
        req.case_id = Some("T-404".into());
        let rec = gw.handle_request(&req).unwrap();
        assert_eq!(rec.parse_failure.as_deref(), Some("missing_trace_entry"));
        assert_eq!(gw.log_lines().len(), 1);
    }

    #[test]
    fn log_count_matches_requests() {
        let gw = two_arm_gateway();
        for i in 0..20 {
            gw.handle_request(&RoutingRequest {
                session_id: format!("s-{i}"),
                prompt: "p".into(),
                case_id: Some("T-001".into()),
            })
            .unwrap();
        }
        assert_eq!(gw.log_lines().len(), 20);
    }

    #[test]
    fn health_flags_trace_gaps() {
        let gw = two_arm_gateway();
        assert_eq!(gw.health().status, "ok");
        let gw = Gateway::new(
            vec![
                Arm {
                    id: ArmId(0),
                    backend: None,
                },
                Arm {
                    id: ArmId(1),
                    backend: Some(backend("b1", &[("T-001", "code/simple")])),
                },
            ],
            7,
            vec!["T-001".to_string(), "T-002".to_string()],
        )
        .unwrap();
        let health = gw.health();
        assert_eq!(health.status, "degraded");
        assert!(!health.arms[1].trace_ok);
    }

    #[test]
    fn zero_arms_rejected_at_startup() {
        assert!(matches!(
            Gateway::new(vec![], 0, vec![]),
            Err(GatewayError::NoArms)
        ));
    }

    #[test]
    fn assignment_uniformity_over_random_ids() {
        // 1e5 pseudo-random ids, k = 4: each arm within 25% +/- 1pp.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(99);
        let mut counts = [0usize; 4];
        let n = 100_000;
        for _ in 0..n {
            let id: u128 = rng.gen();
            counts[assign_arm(&format!("{id:032x}"), 4).unwrap()] += 1;
        }
        for c in counts {
            let share = c as f64 / n as f64;
            assert!((share - 0.25).abs() < 0.01, "share = {share}");
        }
    }

    #[test]
    fn session_rng_is_reproducible() {
        let gw = two_arm_gateway();
        use rand::RngCore;
        let mut a = gw.session_rng("sess-1");
        let mut b = gw.session_rng("sess-1");
        assert_eq!(a.next_u64(), b.next_u64());
        let mut c = gw.session_rng("sess-2");
        assert_ne!(a.next_u64(), c.next_u64());
    }
}
