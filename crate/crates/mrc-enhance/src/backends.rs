//! Backend construction from configuration, plus the wall clock.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};

use mrc_enhance_core::augment::{
    DriftTranslator, EchoParaphraser, IdentityTranslator, Paraphraser, ReverseTranslator, ShuffleParaphraser,
    TableParaphraser, TableSynonyms, TableTranslator, TranslatorPair,
};
use mrc_enhance_core::simscore::{EmbeddingScorer, HashingEmbedder, TableEmbedder};
use mrc_enhance_core::{Clock, JaccardScorer, PivotLanguage, SimilarityScorer, TokenEmbedder};

use crate::config::{BackendSpec, PipelineConfig};
use crate::formats::read_json;

/// Monotonic seconds since construction.
#[derive(Debug, Clone, Copy)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now_seconds(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}

/// Current UTC time as an ISO-8601 string.
pub fn now_iso() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub type SharedParaphraser = Box<dyn Paraphraser + Send + Sync>;
pub type SharedEmbedder = Box<dyn TokenEmbedder + Send + Sync>;

fn required_path(spec: &BackendSpec) -> Result<&Path> {
    spec.path.as_deref().with_context(|| format!("backend {:?} needs a \"path\"", spec.kind))
}

pub fn paraphraser(spec: &BackendSpec, seed: u64) -> Result<SharedParaphraser> {
    Ok(match spec.kind.as_str() {
        "shuffle" => Box::new(ShuffleParaphraser { seed }),
        "echo" => Box::new(EchoParaphraser),
        "table" => {
            let table: BTreeMap<String, Vec<String>> = read_json(required_path(spec)?)?;
            Box::new(TableParaphraser { name: spec.display_name().to_string(), table })
        }
        other => bail!("unknown paraphraser {other:?}; available: shuffle, echo, table"),
    })
}

/// Find a configured paraphraser by display name.
pub fn paraphraser_named(config: &PipelineConfig, name: &str, seed: u64) -> Result<SharedParaphraser> {
    let spec = config
        .backends
        .paraphrasers
        .iter()
        .find(|s| s.display_name() == name)
        .cloned()
        .unwrap_or_else(|| BackendSpec::named(name));
    paraphraser(&spec, seed)
}

/// Builds one translator pair per pivot. Table translators read
/// `{pivot_code: {question: round_trip}}`.
pub struct TranslatorFactory {
    kind: String,
    tables: BTreeMap<String, BTreeMap<String, String>>,
}

impl TranslatorFactory {
    pub fn new(spec: &BackendSpec) -> Result<Self> {
        let tables = match spec.kind.as_str() {
            "identity" | "reverse" | "drift" => BTreeMap::new(),
            "table" => read_json(required_path(spec)?)?,
            other => bail!("unknown translator {other:?}; available: identity, reverse, drift, table"),
        };
        Ok(Self { kind: spec.kind.clone(), tables })
    }

    pub fn make(&self, pivot: PivotLanguage) -> Box<dyn TranslatorPair> {
        match self.kind.as_str() {
            "identity" => Box::new(IdentityTranslator(pivot)),
            "reverse" => Box::new(ReverseTranslator(pivot)),
            "table" => {
                Box::new(TableTranslator { pivot, table: self.tables.get(pivot.code()).cloned().unwrap_or_default() })
            }
            _ => Box::new(DriftTranslator(pivot)),
        }
    }
}

/// Embedders: `hashing` (optional `name` = dimension) or `table` reading
/// `{token: [f64, ...]}`.
pub fn embedder(spec: &BackendSpec) -> Result<SharedEmbedder> {
    Ok(match spec.kind.as_str() {
        "hashing" => {
            let dim = match &spec.name {
                Some(d) => d.parse().with_context(|| format!("hashing embedder dimension {d:?}"))?,
                None => 64,
            };
            Box::new(HashingEmbedder::new(dim))
        }
        "table" => {
            let table: BTreeMap<String, Vec<f64>> = read_json(required_path(spec)?)?;
            Box::new(TableEmbedder::new(table).map_err(|e| anyhow::anyhow!("embedding table: {e}"))?)
        }
        other => bail!("unknown embedder {other:?}; available: hashing, table"),
    })
}

pub fn scorer(config: &PipelineConfig) -> Result<Box<dyn SimilarityScorer + Send + Sync>> {
    Ok(match config.backends.scorer.as_str() {
        "jaccard" => Box::new(JaccardScorer),
        "embedding" => Box::new(EmbeddingScorer { embedder: embedder(&config.backends.embedder)? }),
        other => bail!("unknown scorer {other:?}"),
    })
}

pub fn synonyms(config: &PipelineConfig, override_path: Option<&Path>) -> Result<TableSynonyms> {
    match override_path.or(config.backends.synonyms.as_deref()) {
        Some(p) => Ok(TableSynonyms { table: read_json(p)? }),
        None => Ok(TableSynonyms::default()),
    }
}
