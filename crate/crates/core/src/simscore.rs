//! Similarity primitives: ROUGE-1 F1, embedding-average cosine, and the
//! pluggable passage scorer used for negative mining.
//!
//! All functions tokenize with [`sim_tokens`]: lowercase, whitespace split,
//! edge punctuation stripped.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::text::{fnv1a, sim_tokens};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("aligned sets differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("cannot average over an empty set")]
    Empty,
}

/// Scores a pair of texts; higher means more similar.
///
/// Bundled scorers are symmetric and deterministic. Model-backed scorers
/// plugged in here may be asymmetric; negative mining always calls
/// `score(positive, candidate)`.
pub trait SimilarityScorer {
    fn score(&self, a: &str, b: &str) -> f64;

    /// `score(q, c)` for every query and candidate, one row per query.
    /// Override to reuse per-text work; results must equal `score`.
    fn score_matrix(&self, queries: &[&str], candidates: &[&str]) -> Vec<Vec<f64>> {
        queries.iter().map(|q| candidates.iter().map(|c| self.score(q, c)).collect()).collect()
    }

    fn name(&self) -> &str {
        "custom"
    }
}

impl<S: SimilarityScorer + ?Sized> SimilarityScorer for &S {
    fn score(&self, a: &str, b: &str) -> f64 {
        (**self).score(a, b)
    }

    fn score_matrix(&self, queries: &[&str], candidates: &[&str]) -> Vec<Vec<f64>> {
        (**self).score_matrix(queries, candidates)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<S: SimilarityScorer + ?Sized> SimilarityScorer for Box<S> {
    fn score(&self, a: &str, b: &str) -> f64 {
        (**self).score(a, b)
    }

    fn score_matrix(&self, queries: &[&str], candidates: &[&str]) -> Vec<Vec<f64>> {
        (**self).score_matrix(queries, candidates)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

/// Maps a token to a fixed-dimension vector. Unknown tokens map to zeros.
pub trait TokenEmbedder {
    fn dim(&self) -> usize;
    fn embed(&self, token: &str) -> Vec<f64>;

    fn name(&self) -> &str {
        "custom"
    }
}

impl<E: TokenEmbedder + ?Sized> TokenEmbedder for &E {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn embed(&self, token: &str) -> Vec<f64> {
        (**self).embed(token)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<E: TokenEmbedder + ?Sized> TokenEmbedder for Box<E> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn embed(&self, token: &str) -> Vec<f64> {
        (**self).embed(token)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

/// ROUGE-1 F1 with clipped unigram counts.
///
/// `P = overlap/|a|`, `R = overlap/|b|`, `F1 = 2PR/(P+R)`, computed as the
/// equivalent `2·overlap/(|a|+|b|)`. Two empty texts score 1, one empty
/// text scores 0.
pub fn rouge1_f1(a: &str, b: &str) -> f64 {
    let ta = sim_tokens(a);
    let tb = sim_tokens(b);
    match (ta.is_empty(), tb.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &ta {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &tb {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    (2 * overlap) as f64 / (ta.len() + tb.len()) as f64
}

fn check_aligned<A, B>(a: &[A], b: &[B]) -> Result<(), SimError> {
    if a.len() != b.len() {
        return Err(SimError::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Err(SimError::Empty);
    }
    Ok(())
}

/// `100 ×` mean ROUGE-1 F1 over index-aligned question pairs.
pub fn avg_pairwise_rouge1<A: AsRef<str>, B: AsRef<str>>(set_a: &[A], set_b: &[B]) -> Result<f64, SimError> {
    check_aligned(set_a, set_b)?;
    let sum: f64 = set_a.iter().zip(set_b).map(|(a, b)| rouge1_f1(a.as_ref(), b.as_ref())).sum();
    Ok(100.0 * sum / set_a.len() as f64)
}

fn mean_vector(text: &str, embedder: &dyn TokenEmbedder) -> Vec<f64> {
    let mut acc = vec![0.0; embedder.dim()];
    let tokens = sim_tokens(text);
    for t in &tokens {
        for (a, v) in acc.iter_mut().zip(embedder.embed(t)) {
            *a += v;
        }
    }
    if !tokens.is_empty() {
        let n = tokens.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
    }
    acc
}

/// Cosine similarity, 0 when either vector is all zeros. Clamped to [-1, 1].
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (libm::sqrt(na) * libm::sqrt(nb))).clamp(-1.0, 1.0)
}

/// Cosine similarity of mean token vectors.
pub fn sentence_similarity(a: &str, b: &str, embedder: &dyn TokenEmbedder) -> f64 {
    cosine(&mean_vector(a, embedder), &mean_vector(b, embedder))
}

/// Cosine similarity of two single-token vectors.
pub fn token_similarity(a: &str, b: &str, embedder: &dyn TokenEmbedder) -> f64 {
    cosine(&embedder.embed(a), &embedder.embed(b))
}

/// Mean sentence similarity between index-aligned variants and originals.
pub fn avg_similarity_index<A: AsRef<str>, B: AsRef<str>>(
    variants: &[A],
    originals: &[B],
    embedder: &dyn TokenEmbedder,
) -> Result<f64, SimError> {
    check_aligned(variants, originals)?;
    let sum: f64 =
        variants.iter().zip(originals).map(|(v, o)| sentence_similarity(v.as_ref(), o.as_ref(), embedder)).sum();
    Ok(sum / variants.len() as f64)
}

/// Jaccard similarity of lowercase token sets; deterministic stand-in for a
/// contextual-embedding passage scorer.
#[derive(Debug, Clone, Copy, Default)]
pub struct JaccardScorer;

pub fn jaccard_scorer() -> JaccardScorer {
    JaccardScorer
}

impl SimilarityScorer for JaccardScorer {
    fn score(&self, a: &str, b: &str) -> f64 {
        let sa: BTreeSet<String> = sim_tokens(a).into_iter().collect();
        let sb: BTreeSet<String> = sim_tokens(b).into_iter().collect();
        let union = sa.union(&sb).count();
        if union == 0 {
            return 1.0;
        }
        sa.intersection(&sb).count() as f64 / union as f64
    }

    fn score_matrix(&self, queries: &[&str], candidates: &[&str]) -> Vec<Vec<f64>> {
        let mut vocab: BTreeMap<String, u32> = BTreeMap::new();
        let mut token_ids = |text: &str| -> Vec<u32> {
            let mut ids: Vec<u32> = sim_tokens(text)
                .into_iter()
                .map(|t| {
                    let next = vocab.len() as u32;
                    *vocab.entry(t).or_insert(next)
                })
                .collect();
            ids.sort_unstable();
            ids.dedup();
            ids
        };
        let qs: Vec<Vec<u32>> = queries.iter().map(|q| token_ids(q)).collect();
        let cs: Vec<Vec<u32>> = candidates.iter().map(|c| token_ids(c)).collect();
        qs.iter()
            .map(|q| {
                cs.iter()
                    .map(|c| {
                        let inter = sorted_intersection(q, c);
                        let union = q.len() + c.len() - inter;
                        if union == 0 {
                            1.0
                        } else {
                            inter as f64 / union as f64
                        }
                    })
                    .collect()
            })
            .collect()
    }

    fn name(&self) -> &str {
        "jaccard"
    }
}

fn sorted_intersection(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Passage scorer backed by a token embedder (mean-vector cosine).
#[derive(Debug, Clone)]
pub struct EmbeddingScorer<E> {
    pub embedder: E,
}

impl<E: TokenEmbedder> SimilarityScorer for EmbeddingScorer<E> {
    fn score(&self, a: &str, b: &str) -> f64 {
        sentence_similarity(a, b, &self.embedder)
    }

    fn name(&self) -> &str {
        "embedding"
    }
}

/// Deterministic embedder that hashes character trigrams of `^token$` into
/// signed buckets. Shares no vocabulary file, so it works anywhere.
#[derive(Debug, Clone, Copy)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        Self { dim: dim.max(1) }
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(64)
    }
}

impl TokenEmbedder for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, token: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let mut chars: Vec<char> = Vec::with_capacity(token.len() + 2);
        chars.push('^');
        chars.extend(token.chars().flat_map(char::to_lowercase));
        chars.push('$');
        if chars.len() == 2 {
            return v;
        }
        let mut buf = [0u8; 12];
        for w in chars.windows(3.min(chars.len())) {
            let mut n = 0;
            for c in w {
                n += c.encode_utf8(&mut buf[n..]).len();
            }
            let h = fnv1a(&buf[..n]);
            let idx = (h % self.dim as u64) as usize;
            v[idx] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        }
        v
    }

    fn name(&self) -> &str {
        "hashing"
    }
}

/// Embedder backed by an explicit token → vector table (e.g. loaded from a
/// word-vector file).
#[derive(Debug, Clone, Default)]
pub struct TableEmbedder {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl TableEmbedder {
    /// Build from `(token, vector)` pairs. Vectors whose length differs from
    /// the first one are rejected.
    pub fn new(entries: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self, SimError> {
        let mut dim = None;
        let mut vectors = BTreeMap::new();
        for (tok, v) in entries {
            let d = *dim.get_or_insert(v.len());
            if v.len() != d {
                return Err(SimError::LengthMismatch { left: d, right: v.len() });
            }
            vectors.insert(tok.chars().flat_map(char::to_lowercase).collect(), v);
        }
        Ok(Self { dim: dim.unwrap_or(1), vectors })
    }
}

impl TokenEmbedder for TableEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, token: &str) -> Vec<f64> {
        let key: String = token.chars().flat_map(char::to_lowercase).collect();
        self.vectors.get(&key).cloned().unwrap_or_else(|| vec![0.0; self.dim])
    }

    fn name(&self) -> &str {
        "table"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn xy() -> TableEmbedder {
        TableEmbedder::new([("x".to_string(), vec![1.0, 0.0]), ("y".to_string(), vec![0.0, 1.0])]).unwrap()
    }

    #[test]
    fn rouge_examples() {
        assert_eq!(rouge1_f1("a b c", "a b c"), 1.0);
        assert_eq!(rouge1_f1("a b c", "x y z"), 0.0);
        assert!((rouge1_f1("a b c", "a b d") - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(rouge1_f1("", ""), 1.0);
        assert_eq!(rouge1_f1("a", ""), 0.0);
    }

    #[test]
    fn rouge_clips_repeated_tokens() {
        // overlap is min(count): "a a b" vs "a c" shares one "a".
        assert!((rouge1_f1("a a b", "a c") - 2.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn avg_pairwise() {
        assert_eq!(avg_pairwise_rouge1(&["a b", "c"], &["a b", "c"]).unwrap(), 100.0);
        assert_eq!(avg_pairwise_rouge1(&["a", "b"], &["a", "c"]).unwrap(), 50.0);
        // Hand F1s: 1, 2/3, 0.5 ("a b" vs "a": 2*1/3 = 2/3; "a b c d" vs "a b": 4/6).
        let v = avg_pairwise_rouge1(&["p q", "a b", "a b c d"], &["p q", "a", "a b x y z w"]).unwrap();
        let expect = 100.0 * (1.0 + 2.0 / 3.0 + 0.4) / 3.0;
        assert!((v - expect).abs() < 1e-9);
        assert_eq!(avg_pairwise_rouge1(&["a"], &["a", "b"]), Err(SimError::LengthMismatch { left: 1, right: 2 }));
    }

    #[test]
    fn sentence_similarity_examples() {
        let e = xy();
        assert_eq!(sentence_similarity("x", "y", &e), 0.0);
        assert!((sentence_similarity("x x", "x y", &e) - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((sentence_similarity("x y", "x y", &e) - 1.0).abs() < 1e-12);
        assert_eq!(sentence_similarity("unknown", "x", &e), 0.0);
    }

    #[test]
    fn similarity_index() {
        let e = xy();
        assert!((avg_similarity_index(&["x", "y"], &["x", "y"], &e).unwrap() - 1.0).abs() < 1e-12);
        assert!((avg_similarity_index(&["x", "y"], &["x", "x"], &e).unwrap() - 0.5).abs() < 1e-12);
        assert!(avg_similarity_index(&["x"], &["x", "y"], &e).is_err());
    }

    #[test]
    fn jaccard_examples() {
        let j = jaccard_scorer();
        assert_eq!(j.score("the cat sat", "the cat slept"), 0.5);
        assert_eq!(j.score("the cat sat", "the cat sat"), 1.0);
        assert_eq!(j.score("a", "b"), 0.0);
    }

    #[test]
    fn hashing_embedder_is_deterministic() {
        let e = HashingEmbedder::default();
        assert_eq!(e.embed("Sleep"), e.embed("sleep"));
        assert!(e.embed("sleep").iter().any(|v| *v != 0.0));
        assert!((sentence_similarity("sleep apnea", "sleep apnea", &e) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn table_embedder_rejects_ragged() {
        assert!(TableEmbedder::new([("a".to_string(), vec![1.0]), ("b".to_string(), vec![1.0, 2.0])]).is_err());
    }
}
