//! Six-label task taxonomy and the frozen evaluation corpus.
//!
//! The corpus is a JSONL file, one object per line:
//! `{"case_id": ..., "prompt": ..., "label": ...}`. Integrity is a SHA-256
//! digest over the raw file bytes (no normalization, LF line endings).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// The six task families. Canonical string forms are case-sensitive and
/// matched byte-exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TaskLabel {
    CodeSimple,
    CodeComplex,
    CotSimple,
    CotComplex,
    HybridAgentic,
    HybridGenerative,
}

/// Coarse label groups used by the error-corridor analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CoarseGroup {
    #[serde(rename = "code")]
    Code,
    #[serde(rename = "CoT")]
    Cot,
    #[serde(rename = "hybrid")]
    Hybrid,
}

impl fmt::Display for CoarseGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoarseGroup::Code => "code",
            CoarseGroup::Cot => "CoT",
            CoarseGroup::Hybrid => "hybrid",
        })
    }
}

impl TaskLabel {
    pub const ALL: [TaskLabel; 6] = [
        TaskLabel::CodeSimple,
        TaskLabel::CodeComplex,
        TaskLabel::CotSimple,
        TaskLabel::CotComplex,
        TaskLabel::HybridAgentic,
        TaskLabel::HybridGenerative,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskLabel::CodeSimple => "code/simple",
            TaskLabel::CodeComplex => "code/complex",
            TaskLabel::CotSimple => "CoT/simple",
            TaskLabel::CotComplex => "CoT/complex",
            TaskLabel::HybridAgentic => "hybrid/agentic",
            TaskLabel::HybridGenerative => "hybrid/generative",
        }
    }

    pub fn coarse_group(&self) -> CoarseGroup {
        match self {
            TaskLabel::CodeSimple | TaskLabel::CodeComplex => CoarseGroup::Code,
            TaskLabel::CotSimple | TaskLabel::CotComplex => CoarseGroup::Cot,
            TaskLabel::HybridAgentic | TaskLabel::HybridGenerative => CoarseGroup::Hybrid,
        }
    }
}

impl fmt::Display for TaskLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskLabel {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_label(s)
    }
}

impl Serialize for TaskLabel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for TaskLabel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_label(&s).map_err(serde::de::Error::custom)
    }
}

/// Byte-exact match against the six canonical label strings. Surrounding
/// whitespace of the candidate is trimmed; nothing else is normalized.
pub fn parse_label(s: &str) -> Result<TaskLabel, CorpusError> {
    let s = s.trim();
    TaskLabel::ALL
        .iter()
        .copied()
        .find(|l| l.as_str() == s)
        .ok_or_else(|| CorpusError::UnknownLabel(s.to_string()))
}

/// One evaluation case. The corpus is stratified by label, so the case's
/// family is its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub case_id: String,
    pub prompt: String,
    #[serde(rename = "label")]
    pub ground_truth: TaskLabel,
}

impl Case {
    pub fn family(&self) -> TaskLabel {
        self.ground_truth
    }
}

/// An immutable, digest-verified evaluation corpus.
#[derive(Debug, Clone)]
pub struct Corpus {
    cases: Vec<Case>,
    digest: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("line {line}: malformed corpus line: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("unknown label: {0:?}")]
    UnknownLabel(String),
    #[error("duplicate case_id: {0}")]
    DuplicateCaseId(String),
    #[error("corpus digest mismatch: expected prefix {expected}, computed {actual}")]
    DigestMismatch { expected: String, actual: String },
    #[error("corpus io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Lowercase 64-hex-char SHA-256 over the exact bytes.
pub fn corpus_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Loads and validates a JSONL corpus. When `expected_digest_prefix` is
/// supplied, the computed digest must start with it.
pub fn load_corpus(
    path: impl AsRef<Path>,
    expected_digest_prefix: Option<&str>,
) -> Result<Corpus, CorpusError> {
    let bytes = std::fs::read(path)?;
    Corpus::from_bytes(&bytes, expected_digest_prefix)
}

impl Corpus {
    pub fn from_bytes(
        bytes: &[u8],
        expected_digest_prefix: Option<&str>,
    ) -> Result<Self, CorpusError> {
        let digest = corpus_digest(bytes);
        if let Some(prefix) = expected_digest_prefix {
            if !digest.starts_with(prefix) {
                return Err(CorpusError::DigestMismatch {
                    expected: prefix.to_string(),
                    actual: digest,
                });
            }
        }
        let text = std::str::from_utf8(bytes).map_err(|e| CorpusError::MalformedLine {
            line: 0,
            reason: format!("not valid UTF-8: {e}"),
        })?;
        let mut cases = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let case: Case =
                serde_json::from_str(line).map_err(|e| CorpusError::MalformedLine {
                    line: idx + 1,
                    reason: e.to_string(),
                })?;
            if case.case_id.is_empty() {
                return Err(CorpusError::MalformedLine {
                    line: idx + 1,
                    reason: "empty case_id".into(),
                });
            }
            if case.prompt.is_empty() {
                return Err(CorpusError::MalformedLine {
                    line: idx + 1,
                    reason: "empty prompt".into(),
                });
            }
            if !seen.insert(case.case_id.clone()) {
                return Err(CorpusError::DuplicateCaseId(case.case_id));
            }
            cases.push(case);
        }
        Ok(Corpus { cases, digest })
    }

    pub fn cases(&self) -> &[Case] {
        &self.cases
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn get(&self, case_id: &str) -> Option<&Case> {
        self.cases.iter().find(|c| c.case_id == case_id)
    }

    pub fn family_counts(&self) -> BTreeMap<TaskLabel, usize> {
        let mut counts = BTreeMap::new();
        for case in &self.cases {
            *counts.entry(case.ground_truth).or_insert(0) += 1;
        }
        counts
    }

    /// A balanced corpus has all six families present with equal counts.
    pub fn is_balanced(&self) -> bool {
        let counts = self.family_counts();
        counts.len() == 6 && counts.values().all(|&c| c == self.cases.len() / 6)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_labels_round_trip() {
        for label in TaskLabel::ALL {
            assert_eq!(parse_label(label.as_str()).unwrap(), label);
        }
    }

    #[test]
    fn label_examples() {
        assert_eq!(parse_label("code/simple").unwrap(), TaskLabel::CodeSimple);
        assert_eq!(
            parse_label("hybrid/agentic").unwrap(),
            TaskLabel::HybridAgentic
        );
        assert!(matches!(
            parse_label("code/medium"),
            Err(CorpusError::UnknownLabel(_))
        ));
        // Byte-exact: case matters.
        assert!(parse_label("Code/Simple").is_err());
        assert!(parse_label("cot/simple").is_err());
    }

    #[test]
    fn empty_and_abc_digests_match_published_vectors() {
        assert_eq!(
            corpus_digest(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            corpus_digest(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    fn mini_corpus_bytes() -> Vec<u8> {
        let mut s = String::new();
        for (i, label) in TaskLabel::ALL.iter().enumerate() {
            s.push_str(&format!(
                "{{\"case_id\": \"T-{:03}\", \"prompt\": \"p{}\", \"label\": \"{}\"}}\n",
                i, i, label
            ));
        }
        s.into_bytes()
    }

    #[test]
    fn loads_balanced_mini_corpus() {
        let corpus = Corpus::from_bytes(&mini_corpus_bytes(), None).unwrap();
        assert_eq!(corpus.len(), 6);
        assert!(corpus.is_balanced());
        assert_eq!(corpus.family_counts().len(), 6);
    }

    #[test]
    fn duplicate_case_id_rejected() {
        let mut bytes = mini_corpus_bytes();
        bytes.extend_from_slice(
            b"{\"case_id\": \"T-000\", \"prompt\": \"dup\", \"label\": \"code/simple\"}\n",
        );
        assert!(matches!(
            Corpus::from_bytes(&bytes, None),
            Err(CorpusError::DuplicateCaseId(_))
        ));
    }

    #[test]
    fn digest_prefix_mismatch_rejected() {
        let bytes = mini_corpus_bytes();
        let err = Corpus::from_bytes(&bytes, Some("0000dead")).unwrap_err();
        assert!(matches!(err, CorpusError::DigestMismatch { .. }));
    }

    #[test]
    fn unknown_label_in_file() {
        let bytes = b"{\"case_id\": \"T-1\", \"prompt\": \"p\", \"label\": \"code/medium\"}\n";
        assert!(Corpus::from_bytes(bytes, None).is_err());
    }

    #[test]
    fn load_is_deterministic() {
        let bytes = mini_corpus_bytes();
        let a = Corpus::from_bytes(&bytes, None).unwrap();
        let b = Corpus::from_bytes(&bytes, None).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_eq!(a.cases(), b.cases());
    }
}
