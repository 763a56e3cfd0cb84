//! Pipeline configuration: one JSON document, unknown keys rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use mrc_enhance_core::corpus::DEFAULT_MAX_WORDS;
use mrc_enhance_core::harness::{EvalMode, Hyperparams, StubTrainer};
use mrc_enhance_core::negatives::DEFAULT_THRESHOLD;

pub const DEFAULT_REVIEW_THRESHOLD: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub datasets: BTreeMap<String, DatasetConfig>,
    pub max_words: usize,
    /// `null` disables the negative occurrence cap.
    pub neg_threshold: Option<usize>,
    pub answer_review_threshold: usize,
    pub strip_keywords: Option<Vec<String>>,
    pub seeds: Seeds,
    pub backends: Backends,
    pub hyperparams: HyperparamOverrides,
    pub stub_trainer: StubTrainerConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            datasets: BTreeMap::new(),
            max_words: DEFAULT_MAX_WORDS,
            neg_threshold: Some(DEFAULT_THRESHOLD),
            answer_review_threshold: DEFAULT_REVIEW_THRESHOLD,
            strip_keywords: None,
            seeds: Seeds::default(),
            backends: Backends::default(),
            hyperparams: HyperparamOverrides::default(),
            stub_trainer: StubTrainerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub corpus: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Overrides the global review threshold (15 for SleepQA-style data).
    pub answer_review_threshold: Option<usize>,
    /// Reader `eval_step` override; 500 suits training sets of thousands of
    /// labels.
    pub reader_eval_step: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub split: u64,
    pub generation: u64,
    /// Seed for the random pick behind set 6.
    pub random_set: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Backends {
    pub paraphrasers: Vec<BackendSpec>,
    pub translator: BackendSpec,
    pub synonyms: Option<PathBuf>,
    pub embedder: BackendSpec,
    pub scorer: String,
    pub trainer: String,
}

impl Default for Backends {
    fn default() -> Self {
        Self {
            paraphrasers: vec![BackendSpec::named("shuffle")],
            translator: BackendSpec::named("drift"),
            synonyms: None,
            embedder: BackendSpec::named("hashing"),
            scorer: "jaccard".into(),
            trainer: "stub".into(),
        }
    }
}

/// A backend by kind, optionally with a display name and a data file
/// (`table` backends replay precomputed outputs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSpec {
    pub kind: String,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub path: Option<PathBuf>,
}

impl BackendSpec {
    pub fn named(kind: &str) -> Self {
        Self { kind: kind.into(), name: None, path: None }
    }

    pub fn display_name(&self) -> &str {
        self.name.as_deref().unwrap_or(&self.kind)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperparamOverrides {
    pub retrieval: serde_json::Map<String, serde_json::Value>,
    pub reader: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StubTrainerConfig {
    pub base_score: f64,
    pub chain_step: f64,
    pub seconds_per_label_epoch: f64,
    /// Fixed scores by variant id.
    pub scores: BTreeMap<String, f64>,
    pub failing: Vec<String>,
}

impl Default for StubTrainerConfig {
    fn default() -> Self {
        Self {
            base_score: 40.0,
            chain_step: 0.5,
            seconds_per_label_epoch: 0.01,
            scores: BTreeMap::new(),
            failing: Vec::new(),
        }
    }
}

impl StubTrainerConfig {
    pub fn build(&self) -> StubTrainer {
        let mut t = StubTrainer::new(self.base_score, self.scores.clone());
        t.chain_step = self.chain_step;
        t.seconds_per_label_epoch = self.seconds_per_label_epoch;
        t.failing = self.failing.iter().cloned().collect();
        t
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("{}: invalid config", path.display()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        if self.max_words == 0 {
            bail!("max_words must be at least 1");
        }
        if self.neg_threshold == Some(0) {
            bail!("neg_threshold must be at least 1 (or null for no cap)");
        }
        if self.answer_review_threshold == 0 {
            bail!("answer_review_threshold must be at least 1");
        }
        if self.backends.trainer != "stub" {
            bail!("unknown trainer backend {:?}; available: stub", self.backends.trainer);
        }
        if !["jaccard", "embedding"].contains(&self.backends.scorer.as_str()) {
            bail!("unknown scorer {:?}; available: jaccard, embedding", self.backends.scorer);
        }
        for mode in [EvalMode::Retrieval, EvalMode::Reader] {
            self.hyperparams_for(mode, None)?;
        }
        Ok(())
    }

    /// Stable digest of the effective configuration.
    pub fn hash(&self) -> String {
        crate::formats::sha256_bytes(&serde_json::to_vec(self).unwrap_or_default())
    }

    pub fn review_threshold(&self, dataset: Option<&str>) -> usize {
        dataset
            .and_then(|d| self.datasets.get(d))
            .and_then(|d| d.answer_review_threshold)
            .unwrap_or(self.answer_review_threshold)
    }

    /// Mode defaults with the configured overrides merged in. Override keys
    /// must name existing hyperparameters.
    pub fn hyperparams_for(&self, mode: EvalMode, dataset: Option<&str>) -> Result<Hyperparams> {
        let base = Hyperparams::for_mode(mode);
        let overrides = match mode {
            EvalMode::Retrieval => &self.hyperparams.retrieval,
            EvalMode::Reader => &self.hyperparams.reader,
        };
        let mut value = serde_json::to_value(&base)?;
        let obj = value.as_object_mut().expect("hyperparams serialize to an object");
        for (k, v) in overrides {
            if !obj.contains_key(k) {
                bail!("unknown {} hyperparameter {k:?}", mode.as_str());
            }
            obj.insert(k.clone(), v.clone());
        }
        let mut hp: Hyperparams =
            serde_json::from_value(value).with_context(|| format!("invalid {} hyperparameters", mode.as_str()))?;
        if mode == EvalMode::Reader {
            if let Some(step) = dataset.and_then(|d| self.datasets.get(d)).and_then(|d| d.reader_eval_step) {
                hp.eval_step = Some(step);
            }
        }
        Ok(hp)
    }

    pub fn continual_hyperparams(&self, mode: EvalMode, dataset: Option<&str>) -> Result<Hyperparams> {
        let mut hp = self.hyperparams_for(mode, dataset)?;
        hp.num_train_epochs = Hyperparams::continual(mode).num_train_epochs;
        Ok(hp)
    }
}
