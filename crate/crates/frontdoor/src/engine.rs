//! Synthetic traffic generation and the multi-arm experiment driver.
//!
//! Session ids are drawn deterministically from the master seed and screened
//! by rejection sampling: an id is kept only when the hash assignment routes
//! it to an arm that still needs sessions. That yields exactly
//! `sessions_per_arm` sessions per arm while keeping SHA-256 assignment the
//! mechanism of record. Cases cycle within each arm in seeded shuffled
//! order, so per-arm multiplicities differ by at most one.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::backends::BackendSpec;
use crate::corpus::Corpus;
use crate::decisions::Gates;
use crate::gateway::{assign_arm, Arm, ArmId, Gateway, GatewayError, RoutingRequest, SessionRecord};

/// The pre-registered experiment parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentParams {
    pub sessions_per_arm: usize,
    pub interim_at: usize,
    pub master_seed: u64,
    pub alpha: f64,
    pub gates: Gates,
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("invalid experiment parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl ExperimentParams {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.sessions_per_arm == 0 {
            return Err(EngineError::InvalidParams("sessions_per_arm must be >= 1".into()));
        }
        if self.interim_at == 0 || self.interim_at > self.sessions_per_arm {
            return Err(EngineError::InvalidParams(
                "interim_at must be in 1..=sessions_per_arm".into(),
            ));
        }
        if !(0.0 < self.alpha && self.alpha < 1.0) {
            return Err(EngineError::InvalidParams("alpha must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// The ordered per-arm request schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficPlan {
    /// `per_arm[i][s]` is session `s` of arm `i` as (session_id, case_id).
    pub per_arm: Vec<Vec<(String, String)>>,
}

impl TrafficPlan {
    pub fn arm_count(&self) -> usize {
        self.per_arm.len()
    }
}

/// Builds the schedule: one shared candidate-id stream, rejection-sampled
/// into arms by hash assignment until every arm holds exactly
/// `sessions_per_arm` ids; case order per arm is an independent seeded
/// shuffle, cycled round-robin.
pub fn generate_traffic(
    arm_count: usize,
    sessions_per_arm: usize,
    master_seed: u64,
    corpus: &Corpus,
) -> TrafficPlan {
    assert!(arm_count >= 1 && sessions_per_arm >= 1 && !corpus.is_empty());
    let mut ids: Vec<Vec<String>> = vec![Vec::with_capacity(sessions_per_arm); arm_count];
    let mut filled = 0;
    let mut n: u64 = 0;
    while filled < arm_count {
        let id = format!("session-{master_seed:016x}-{n:08}");
        n += 1;
        let arm = assign_arm(&id, arm_count).expect("nonempty id");
        if ids[arm].len() < sessions_per_arm {
            ids[arm].push(id);
            if ids[arm].len() == sessions_per_arm {
                filled += 1;
            }
        }
    }

    let per_arm = ids
        .into_iter()
        .enumerate()
        .map(|(arm, arm_ids)| {
            let mut order: Vec<&str> = corpus.cases().iter().map(|c| c.case_id.as_str()).collect();
            let mut rng = ChaCha12Rng::seed_from_u64(master_seed ^ (arm as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            order.shuffle(&mut rng);
            arm_ids
                .into_iter()
                .enumerate()
                .map(|(s, id)| (id, order[s % order.len()].to_string()))
                .collect()
        })
        .collect();
    TrafficPlan { per_arm }
}

/// All records of one run plus the interim-look snapshot.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    /// Every record, in issue order (round-robin across arms).
    pub records: Vec<SessionRecord>,
    /// The records available at the interim look: the first `interim_at`
    /// sessions of every arm.
    pub interim_records: Vec<SessionRecord>,
}

/// Builds the gateway for a backend set: arm 0 is the pass-through control,
/// arms 1..=k are the treatments in the given order.
pub fn build_gateway(
    backends: Vec<BackendSpec>,
    master_seed: u64,
    corpus: &Corpus,
) -> Result<Gateway, GatewayError> {
    let mut arms = vec![Arm {
        id: ArmId(0),
        backend: None,
    }];
    for (i, backend) in backends.into_iter().enumerate() {
        arms.push(Arm {
            id: ArmId(i + 1),
            backend: Some(backend),
        });
    }
    let case_ids = corpus.cases().iter().map(|c| c.case_id.clone()).collect();
    Gateway::new(arms, master_seed, case_ids)
}

/// Issues every planned request through the gateway, interleaving arms
/// round-robin so the interim snapshot is a time-consistent prefix.
pub fn run_experiment(
    gateway: &Gateway,
    plan: &TrafficPlan,
    interim_at: usize,
) -> Result<ExperimentRun, EngineError> {
    let sessions_per_arm = plan.per_arm.first().map(|a| a.len()).unwrap_or(0);
    let mut records = Vec::with_capacity(plan.arm_count() * sessions_per_arm);
    let mut interim_records = Vec::new();
    for s in 0..sessions_per_arm {
        for arm_plan in &plan.per_arm {
            let (session_id, case_id) = &arm_plan[s];
            let record = gateway.handle_request(&RoutingRequest {
                session_id: session_id.clone(),
                prompt: gateway_prompt(case_id),
                case_id: Some(case_id.clone()),
            })?;
            if s < interim_at {
                interim_records.push(record.clone());
            }
            records.push(record);
        }
    }
    Ok(ExperimentRun {
        records,
        interim_records,
    })
}

/// Synthetic traffic reuses the case id as a stable prompt reference; the
/// simulated backends key on case_id, not prompt text.
fn gateway_prompt(case_id: &str) -> String {
    format!("corpus:{case_id}")
}

/// Number of distinct cases observed in one arm's records.
pub fn effective_sample_size(records: &[SessionRecord]) -> usize {
    records
        .iter()
        .filter_map(|r| r.case_id.as_deref())
        .collect::<std::collections::BTreeSet<_>>()
        .len()
}

/// Splits records by arm index, preserving order.
pub fn records_by_arm(records: &[SessionRecord], arm_count: usize) -> Vec<Vec<SessionRecord>> {
    let mut by_arm = vec![Vec::new(); arm_count];
    for r in records {
        if r.arm.0 < arm_count {
            by_arm[r.arm.0].push(r.clone());
        }
    }
    by_arm
}
