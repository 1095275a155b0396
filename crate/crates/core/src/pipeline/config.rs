//! Run configuration, read from TOML.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::backend::BackendSettings;
use super::cache::sha256_hex;
use crate::cascade::{BinaryTask, CascadeConfig, HyperParams, SearchSpace};
use crate::corpus::SpoilerTag;
use crate::metrics::BleuAggregation;
use crate::spoiler::{ExtractOptions, SpoilMode, DEFAULT_PROMPT_BUDGET};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{field}: path {path} does not exist")]
    MissingPath { field: &'static str, path: PathBuf },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierBackend {
    #[default]
    NativeBaseline,
    Remote,
}

impl FromStr for ClassifierBackend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "native-baseline" | "native" => Ok(ClassifierBackend::NativeBaseline),
            "remote" => Ok(ClassifierBackend::Remote),
            other => Err(format!("unknown classification backend `{other}` (expected native-baseline or remote)")),
        }
    }
}

/// Which BLEU aggregations a report carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BleuReporting {
    #[default]
    SentenceMean,
    Pooled,
    Both,
}

impl BleuReporting {
    pub fn aggregations(self) -> Vec<BleuAggregation> {
        match self {
            BleuReporting::SentenceMean => vec![BleuAggregation::SentenceMean],
            BleuReporting::Pooled => vec![BleuAggregation::Pooled],
            BleuReporting::Both => vec![BleuAggregation::SentenceMean, BleuAggregation::Pooled],
        }
    }
}

impl FromStr for BleuReporting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "both" => Ok(BleuReporting::Both),
            other => match other.parse::<BleuAggregation>() {
                Ok(BleuAggregation::SentenceMean) => Ok(BleuReporting::SentenceMean),
                Ok(BleuAggregation::Pooled) => Ok(BleuReporting::Pooled),
                Err(_) => Err(format!("unknown BLEU aggregation `{other}` (expected sentence-mean, pooled or both)")),
            },
        }
    }
}

impl fmt::Display for BleuReporting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BleuReporting::SentenceMean => "sentence-mean",
            BleuReporting::Pooled => "pooled",
            BleuReporting::Both => "both",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusPaths {
    /// Training split: baseline training data and one-shot exemplars.
    pub train: Option<PathBuf>,
    /// Split that classification and spoiling run over.
    pub validation: Option<PathBuf>,
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassificationConfig {
    pub backend: ClassifierBackend,
    pub multi_threshold: f64,
    pub passage_threshold: f64,
    /// Remote model names sent in score requests.
    pub multi_model: String,
    pub passage_model: String,
    /// Native baseline hyperparameters; the reported ones when absent.
    pub model1: Option<HyperParams>,
    pub model2: Option<HyperParams>,
}

impl Default for ClassificationConfig {
    fn default() -> Self {
        let c = CascadeConfig::default();
        ClassificationConfig {
            backend: ClassifierBackend::default(),
            multi_threshold: c.multi_threshold,
            passage_threshold: c.passage_threshold,
            multi_model: BinaryTask::MultiVsRest.as_str().into(),
            passage_model: BinaryTask::PassageVsPhrase.as_str().into(),
            model1: None,
            model2: None,
        }
    }
}

impl ClassificationConfig {
    pub fn cascade(&self) -> CascadeConfig {
        CascadeConfig {
            multi_threshold: self.multi_threshold,
            passage_threshold: self.passage_threshold,
        }
    }

    pub fn hyper_params(&self, task: BinaryTask) -> HyperParams {
        let custom = match task {
            BinaryTask::MultiVsRest => self.model1,
            BinaryTask::PassageVsPhrase => self.model2,
        };
        custom.unwrap_or_else(|| HyperParams::reported_for(task))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpoilingConfig {
    pub mode: SpoilMode,
    pub prompt_budget: usize,
    pub max_output_tokens: u32,
    /// Pins the one-shot exemplar per tag to a train record id.
    pub exemplar_ids: BTreeMap<SpoilerTag, String>,
    pub extract: ExtractOptions,
}

impl Default for SpoilingConfig {
    fn default() -> Self {
        SpoilingConfig {
            mode: SpoilMode::default(),
            prompt_budget: DEFAULT_PROMPT_BUDGET,
            max_output_tokens: 64,
            exemplar_ids: BTreeMap::new(),
            extract: ExtractOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub task: BinaryTask,
    pub trials: usize,
    pub space: SearchSpace,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            task: BinaryTask::MultiVsRest,
            trials: 10,
            space: SearchSpace::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub base_url: String,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
    pub retries: u32,
    pub backoff_ms: u64,
    pub cache_dir: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        let s = BackendSettings::default();
        BackendConfig {
            base_url: s.base_url,
            timeout_ms: s.timeout_ms,
            max_in_flight: s.max_in_flight,
            retries: s.retries,
            backoff_ms: s.backoff_ms,
            cache_dir: None,
        }
    }
}

impl BackendConfig {
    pub fn settings(&self) -> BackendSettings {
        BackendSettings {
            base_url: self.base_url.clone(),
            timeout_ms: self.timeout_ms,
            max_in_flight: self.max_in_flight,
            retries: self.retries,
            backoff_ms: self.backoff_ms,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub bleu_aggregation: BleuReporting,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Single source of all randomness.
    pub seed: u64,
    /// Per-record parallelism bound; 0 means one per core.
    pub workers: usize,
    pub corpus: CorpusPaths,
    pub classification: ClassificationConfig,
    pub spoiling: SpoilingConfig,
    pub sweep: SweepConfig,
    pub backend: BackendConfig,
    pub report: ReportConfig,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Reads and validates a config file; relative paths are taken relative
    /// to the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.corpus.train);
        resolve(base, &mut cfg.corpus.validation);
        resolve(base, &mut cfg.backend.cache_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Stable digest of the effective configuration.
    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, p) in [("corpus.train", &self.corpus.train), ("corpus.validation", &self.corpus.validation)] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(ConfigError::MissingPath {
                        field,
                        path: p.clone(),
                    });
                }
            }
        }
        self.classification
            .cascade()
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("classification: {e}")))?;
        for task in [BinaryTask::MultiVsRest, BinaryTask::PassageVsPhrase] {
            self.classification
                .hyper_params(task)
                .validate()
                .map_err(|e| ConfigError::Invalid(format!("classification {}: {e}", task.as_str())))?;
        }
        self.sweep
            .space
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("sweep.space: {e}")))?;
        if self.sweep.trials == 0 {
            return Err(ConfigError::Invalid("sweep.trials must be at least 1".into()));
        }
        let x = &self.spoiling.extract;
        if x.multi_min_spans < 2 || x.multi_max_spans < x.multi_min_spans {
            return Err(ConfigError::Invalid(
                "spoiling.extract: need 2 <= multi_min_spans <= multi_max_spans".into(),
            ));
        }
        if !(0.0..=1.0).contains(&x.multi_gain_ratio) {
            return Err(ConfigError::Invalid("spoiling.extract.multi_gain_ratio must lie in [0, 1]".into()));
        }
        if self.spoiling.max_output_tokens == 0 {
            return Err(ConfigError::Invalid("spoiling.max_output_tokens must be positive".into()));
        }
        if self.backend.timeout_ms == 0 || self.backend.max_in_flight == 0 {
            return Err(ConfigError::Invalid("backend.timeout_ms and backend.max_in_flight must be positive".into()));
        }
        Ok(())
    }
}
