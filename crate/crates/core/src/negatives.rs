//! Negative-context mining.
//!
//! For each training label, every other corpus passage is ranked by
//! ascending similarity to the label's positive context and the least
//! similar ones become its negatives. A global occurrence ledger caps how
//! many times any passage may be used as a negative across the whole run,
//! which makes the result depend on label order; labels are processed in
//! input order.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::corpus::{Passage, QALabel};
use crate::simscore::SimilarityScorer;

/// Default cap on how often one passage may serve as a negative.
pub const DEFAULT_THRESHOLD: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NegativesError {
    #[error("k must be at least 1")]
    InvalidK,
    #[error("occurrence threshold must be at least 1")]
    InvalidThreshold,
    #[error("label {0}: positive context not found in corpus")]
    MissingPositive(String),
    #[error("label {label_id}: only {found} eligible negatives, {wanted} required")]
    InsufficientNegatives { label_id: String, found: usize, wanted: usize },
}

/// Per-passage usage counts with an optional cap (`None` = unbounded).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccurrenceLedger {
    counts: BTreeMap<String, usize>,
    threshold: Option<usize>,
}

impl OccurrenceLedger {
    pub fn new(threshold: usize) -> Result<Self, NegativesError> {
        if threshold == 0 {
            return Err(NegativesError::InvalidThreshold);
        }
        Ok(Self { counts: BTreeMap::new(), threshold: Some(threshold) })
    }

    pub fn unbounded() -> Self {
        Self::default()
    }

    pub fn threshold(&self) -> Option<usize> {
        self.threshold
    }

    pub fn count(&self, passage_id: &str) -> usize {
        self.counts.get(passage_id).copied().unwrap_or(0)
    }

    pub fn has_room(&self, passage_id: &str) -> bool {
        self.threshold.is_none_or(|t| self.count(passage_id) < t)
    }

    fn record(&mut self, passage_id: &str) {
        *self.counts.entry(passage_id.into()).or_default() += 1;
    }

    pub fn max_count(&self) -> usize {
        self.counts.values().copied().max().unwrap_or(0)
    }

    pub fn counts(&self) -> &BTreeMap<String, usize> {
        &self.counts
    }
}

/// Candidate order for each distinct positive context present in the
/// corpus: corpus indices sorted by ascending similarity, ties by passage id.
fn rank_candidates<'a>(
    train: &'a [QALabel],
    by_id: &BTreeMap<&str, usize>,
    corpus: &[Passage],
    scorer: &dyn SimilarityScorer,
) -> BTreeMap<&'a str, Vec<usize>> {
    let mut positives: Vec<(&str, usize)> = Vec::new();
    let mut seen = BTreeMap::new();
    for label in train {
        let id = label.positive_ctx.id.as_str();
        if let Some(&i) = by_id.get(id) {
            if seen.insert(id, ()).is_none() {
                positives.push((id, i));
            }
        }
    }
    let queries: Vec<&str> = positives.iter().map(|&(_, i)| corpus[i].text.as_str()).collect();
    let candidates: Vec<&str> = corpus.iter().map(|p| p.text.as_str()).collect();
    let matrix = scorer.score_matrix(&queries, &candidates);
    positives
        .into_iter()
        .zip(matrix)
        .map(|((id, _), row)| {
            let mut scored: Vec<(f64, usize)> =
                row.into_iter().enumerate().filter(|&(i, _)| corpus[i].id != id).map(|(i, s)| (s, i)).collect();
            scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| corpus[a.1].id.cmp(&corpus[b.1].id)));
            (id, scored.into_iter().map(|(_, i)| i).collect())
        })
        .collect()
}

/// Assign `k` negatives to every label, lowest similarity first, skipping
/// passages whose ledger count has reached the threshold.
///
/// Rankings are computed once per distinct positive context and reused.
pub fn mine_negatives(
    train: &[QALabel],
    corpus: &[Passage],
    k: usize,
    scorer: &dyn SimilarityScorer,
    ledger: &mut OccurrenceLedger,
) -> Result<Vec<QALabel>, NegativesError> {
    if k == 0 {
        return Err(NegativesError::InvalidK);
    }
    let by_id: BTreeMap<&str, usize> = corpus.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();
    let rankings = rank_candidates(train, &by_id, corpus, scorer);
    let mut out = Vec::with_capacity(train.len());
    for label in train {
        let pos_id = label.positive_ctx.id.as_str();
        let ranking = rankings.get(pos_id).ok_or_else(|| NegativesError::MissingPositive(label.id.clone()))?;
        let chosen: Vec<usize> = ranking.iter().copied().filter(|&i| ledger.has_room(&corpus[i].id)).take(k).collect();
        if chosen.len() < k {
            return Err(NegativesError::InsufficientNegatives {
                label_id: label.id.clone(),
                found: chosen.len(),
                wanted: k,
            });
        }
        let mut mined = label.clone();
        mined.negative_ctxs = chosen
            .into_iter()
            .map(|i| {
                ledger.record(&corpus[i].id);
                corpus[i].clone()
            })
            .collect();
        out.push(mined);
    }
    Ok(out)
}

/// A training set where every label carries exactly `k` negatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeSuite {
    pub k: usize,
    pub threshold: Option<usize>,
    pub labels: Vec<QALabel>,
    pub generation_seconds: f64,
}

/// Mine one suite per `k`, each with a fresh ledger.
pub fn build_negative_suites(
    train: &[QALabel],
    corpus: &[Passage],
    scorer: &dyn SimilarityScorer,
    ks: &[usize],
    threshold: Option<usize>,
    clock: &dyn Clock,
) -> Result<Vec<NegativeSuite>, NegativesError> {
    ks.iter()
        .map(|&k| {
            let mut ledger = match threshold {
                Some(t) => OccurrenceLedger::new(t)?,
                None => OccurrenceLedger::unbounded(),
            };
            let start = clock.now_seconds();
            let labels = mine_negatives(train, corpus, k, scorer, &mut ledger)?;
            let generation_seconds = clock.now_seconds() - start;
            Ok(NegativeSuite { k, threshold, labels, generation_seconds })
        })
        .collect()
}
