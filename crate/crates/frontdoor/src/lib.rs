//! Front-door routing experimentation platform.
//!
//! A small-language-model "front door" classifies each incoming prompt into a
//! six-label task taxonomy; the label deterministically selects the downstream
//! model tier. This crate provides everything needed to evaluate candidate
//! classifier backends end to end at desk scale:
//!
//! - [`corpus`]: the frozen six-label taxonomy and the 60-case evaluation
//!   corpus with SHA-256 integrity checking.
//! - [`contract`]: the frozen classification system prompt and the strict
//!   JSON label/confidence response contract.
//! - [`backends`]: deterministic trace-replay classifier backends with a
//!   log-normal latency model and per-request marginal cost.
//! - [`gateway`]: SHA-256 session-hash arm assignment, request handling, and
//!   append-only JSONL session logging, plus an HTTP veneer in [`server`].
//! - [`engine`]: synthetic traffic generation and the multi-arm experiment
//!   driver (exact per-arm N via rejection sampling on the hash assignment).
//! - [`metrics`]: pre-registered endpoints — exact-match accuracy, parse
//!   rate, macro F1, nearest-rank latency quantiles, cost aggregates, error
//!   corridors, cost savings / break-even, and the Pareto frontier.
//! - [`stats`]: exact McNemar, Holm-Bonferroni step-down, seeded bootstrap
//!   percentile CIs, Welch's t, and O'Brien-Fleming interim boundaries.
//! - [`decisions`]: viable-region gates and the deployment decision matrix
//!   with the hosting-class tie-break.
//! - [`analysis`] / [`config`] / [`report`]: the orchestration layer shared
//!   by the CLI's bench, experiment, and analyze modes.

pub mod analysis;
pub mod backends;
pub mod config;
pub mod contract;
pub mod corpus;
pub mod decisions;
pub mod engine;
pub mod gateway;
pub mod metrics;
pub mod report;
pub mod server;
pub mod stats;

pub use corpus::{Case, Corpus, TaskLabel};
pub use gateway::{ArmId, Gateway, RoutingRequest, SessionRecord};
