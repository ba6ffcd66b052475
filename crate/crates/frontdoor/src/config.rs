//! TOML run configuration.
//!
//! One file describes a complete run: the corpus (with its pinned digest
//! prefix), the experiment parameters and gates, and the backend arms.
//! Relative paths are resolved against the config file's directory, so runs
//! work from any working directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backends::{fit_latency_model, load_trace, BackendError, BackendSpec, DecodeBudget,
    HostingClass};
use crate::corpus::{load_corpus, Corpus, CorpusError};
use crate::decisions::Gates;
use crate::engine::ExperimentParams;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("corpus error: {0}")]
    Corpus(#[from] CorpusError),
    #[error("backend {name}: {source}")]
    Backend {
        name: String,
        source: BackendError,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub path: PathBuf,
    /// Hex prefix the corpus file's SHA-256 must start with.
    pub expected_digest_prefix: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub sessions_per_arm: usize,
    pub interim_at: usize,
    pub master_seed: u64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendConfig {
    pub name: String,
    pub hosting: HostingClass,
    pub marginal_cost_usd: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub trace_path: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub corpus: CorpusConfig,
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub gates: Gates,
    #[serde(default)]
    pub backends: Vec<BackendConfig>,
}

impl RunConfig {
    /// Parses and validates a config file, resolving relative paths against
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: RunConfig = toml::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.corpus.path = resolve(base, &config.corpus.path);
        for backend in &mut config.backends {
            backend.trace_path = resolve(base, &backend.trace_path);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.backends.is_empty() {
            return Err(ConfigError::Invalid("at least one backend is required".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for b in &self.backends {
            if !names.insert(&b.name) {
                return Err(ConfigError::Invalid(format!("duplicate backend name {:?}", b.name)));
            }
            if b.marginal_cost_usd < 0.0 {
                return Err(ConfigError::Invalid(format!(
                    "backend {:?}: marginal_cost_usd must be >= 0",
                    b.name
                )));
            }
        }
        self.experiment_params()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let accuracy_ok = self.gates.min_accuracy >= 0.0 && self.gates.min_accuracy <= 1.0;
        if !accuracy_ok {
            return Err(ConfigError::Invalid("gates.min_accuracy must be in [0, 1]".into()));
        }
        let latency_ok = self.gates.max_p95_ms > 0.0;
        if !latency_ok {
            return Err(ConfigError::Invalid("gates.max_p95_ms must be positive".into()));
        }
        Ok(())
    }

    pub fn experiment_params(&self) -> ExperimentParams {
        ExperimentParams {
            sessions_per_arm: self.experiment.sessions_per_arm,
            interim_at: self.experiment.interim_at,
            master_seed: self.experiment.master_seed,
            alpha: self.experiment.alpha,
            gates: self.gates,
        }
    }

    pub fn load_corpus(&self) -> Result<Corpus, ConfigError> {
        Ok(load_corpus(
            &self.corpus.path,
            self.corpus.expected_digest_prefix.as_deref(),
        )?)
    }

    /// Builds every backend: fits the latency model and loads the trace.
    /// Errors name the offending backend.
    pub fn build_backends(&self) -> Result<Vec<BackendSpec>, ConfigError> {
        self.backends
            .iter()
            .map(|b| {
                let latency =
                    fit_latency_model(b.median_ms, b.p95_ms).map_err(|source| {
                        ConfigError::Backend {
                            name: b.name.clone(),
                            source,
                        }
                    })?;
                let trace = load_trace(&b.trace_path).map_err(|source| ConfigError::Backend {
                    name: b.name.clone(),
                    source,
                })?;
                Ok(BackendSpec {
                    name: b.name.clone(),
                    hosting: b.hosting,
                    marginal_cost_usd: b.marginal_cost_usd,
                    latency,
                    trace,
                    decode: DecodeBudget::default(),
                })
            })
            .collect()
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_fixture(dir: &Path) -> PathBuf {
        let corpus = dir.join("corpus.jsonl");
        let mut f = std::fs::File::create(&corpus).unwrap();
        writeln!(
            f,
            "{{\"case_id\": \"T-001\", \"prompt\": \"p\", \"label\": \"code/simple\"}}"
        )
        .unwrap();
        let trace = dir.join("trace.jsonl");
        let mut f = std::fs::File::create(&trace).unwrap();
        writeln!(
            f,
            "{{\"case_id\": \"T-001\", \"raw_output\": \"{{\\\"label\\\": \\\"code/simple\\\", \\\"confidence\\\": 1.0}}\"}}"
        )
        .unwrap();
        let config = dir.join("run.toml");
        std::fs::write(
            &config,
            r#"
[corpus]
path = "corpus.jsonl"

[experiment]
sessions_per_arm = 10
interim_at = 5
master_seed = 7
alpha = 0.05

[gates]
min_accuracy = 0.85
max_p95_ms = 2000.0

[[backends]]
name = "echo"
hosting = "self_hosted"
marginal_cost_usd = 0.0
median_ms = 100.0
p95_ms = 150.0
trace_path = "trace.jsonl"
"#,
        )
        .unwrap();
        config
    }

    #[test]
    fn loads_and_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let config = RunConfig::load(write_fixture(dir.path())).unwrap();
        assert_eq!(config.backends.len(), 1);
        let corpus = config.load_corpus().unwrap();
        assert_eq!(corpus.len(), 1);
        let backends = config.build_backends().unwrap();
        assert!(backends[0].covers(["T-001"]));
        assert_eq!(config.experiment_params().sessions_per_arm, 10);
    }

    #[test]
    fn default_gates_applied_when_section_missing() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(dir.path());
        let text = std::fs::read_to_string(&path).unwrap();
        let without_gates = text.replace("[gates]\nmin_accuracy = 0.85\nmax_p95_ms = 2000.0\n", "");
        std::fs::write(&path, without_gates).unwrap();
        let config = RunConfig::load(&path).unwrap();
        assert_eq!(config.gates.min_accuracy, 0.85);
        assert_eq!(config.gates.max_p95_ms, 2000.0);
    }

    #[test]
    fn rejects_empty_backends_and_bad_interim() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(dir.path());
        let text = std::fs::read_to_string(&path).unwrap();
        let no_backends = text.split("[[backends]]").next().unwrap().to_string();
        std::fs::write(&path, &no_backends).unwrap();
        assert!(matches!(RunConfig::load(&path), Err(ConfigError::Invalid(_))));

        std::fs::write(&path, text.replace("interim_at = 5", "interim_at = 50")).unwrap();
        assert!(matches!(RunConfig::load(&path), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn missing_trace_error_names_backend() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(dir.path());
        std::fs::remove_file(dir.path().join("trace.jsonl")).unwrap();
        let config = RunConfig::load(&path).unwrap();
        let err = config.build_backends().unwrap_err();
        assert!(err.to_string().contains("echo"), "{err}");
    }

    #[test]
    fn digest_prefix_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(dir.path());
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(
            &path,
            text.replace(
                "path = \"corpus.jsonl\"",
                "path = \"corpus.jsonl\"\nexpected_digest_prefix = \"ffffffff\"",
            ),
        )
        .unwrap();
        let config = RunConfig::load(&path).unwrap();
        assert!(matches!(
            config.load_corpus(),
            Err(ConfigError::Corpus(CorpusError::DigestMismatch { .. }))
        ));
    }
}
