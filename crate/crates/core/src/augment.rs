//! Question-variant training sets: paraphrasing, word substitution, and
//! back translation.
//!
//! Paraphrase and substitution both produce five variants per question and
//! turn them into six training sets: sets 1 to 5 take the most to least
//! similar variant of every question, set 6 takes a seeded random one.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::corpus::QALabel;
use crate::simscore::{avg_similarity_index, sentence_similarity, token_similarity, TokenEmbedder};
use crate::text::{fnv1a, fnv1a_extend, normalize, sim_tokens, strip_edge_punct};

/// Variants generated per question.
pub const VARIANTS_PER_QUESTION: usize = 5;
/// Ranked sets plus the random set.
pub const SETS_PER_METHOD: usize = 6;
pub const DEFAULT_MAX_ATTEMPTS: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AugmentError {
    #[error("question {index}: expected {expected} variants, got {got}")]
    VariantCount { index: usize, expected: usize, got: usize },
    #[error("{variants} variant lists for {questions} questions")]
    Misaligned { variants: usize, questions: usize },
    #[error("unknown pivot language {0:?}")]
    UnknownPivot(String),
    #[error("nothing to concatenate: no improving training sets")]
    NoImprovingSets,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("translation failed: {0}")]
pub struct TranslateError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    /// The unmodified training set.
    #[serde(rename = "original")]
    Original,
    #[serde(rename = "negatives")]
    Negatives,
    #[serde(rename = "paraphrase")]
    Paraphrase,
    #[serde(rename = "substitution")]
    Substitution,
    #[serde(rename = "backtranslation")]
    Backtranslation,
    #[serde(rename = "answer_shortening")]
    AnswerShortening,
    #[serde(rename = "augmentation-concat")]
    AugmentationConcat,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Original,
        Method::Negatives,
        Method::Paraphrase,
        Method::Substitution,
        Method::Backtranslation,
        Method::AnswerShortening,
        Method::AugmentationConcat,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Original => "original",
            Self::Negatives => "negatives",
            Self::Paraphrase => "paraphrase",
            Self::Substitution => "substitution",
            Self::Backtranslation => "backtranslation",
            Self::AnswerShortening => "answer_shortening",
            Self::AugmentationConcat => "augmentation-concat",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

/// The 25 pivot languages used for back translation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PivotLanguage(&'static str, &'static str);

impl PivotLanguage {
    pub const ALL: [PivotLanguage; 25] = [
        PivotLanguage("es", "Spanish"),
        PivotLanguage("fr", "French"),
        PivotLanguage("de", "German"),
        PivotLanguage("ru", "Russian"),
        PivotLanguage("zh", "Chinese"),
        PivotLanguage("ar", "Arabic"),
        PivotLanguage("nl", "Dutch"),
        PivotLanguage("fi", "Finnish"),
        PivotLanguage("hu", "Hungarian"),
        PivotLanguage("mul", "Multiple Languages"),
        PivotLanguage("uk", "Ukrainian"),
        PivotLanguage("hi", "Hindi"),
        PivotLanguage("da", "Danish"),
        PivotLanguage("cs", "Czech"),
        PivotLanguage("roa", "Romance Languages"),
        PivotLanguage("bg", "Bulgarian"),
        PivotLanguage("ca", "Catalan"),
        PivotLanguage("af", "Afrikaans"),
        PivotLanguage("et", "Estonian"),
        PivotLanguage("trk", "Turkic Languages"),
        PivotLanguage("sla", "Slavic Languages"),
        PivotLanguage("id", "Indonesian"),
        PivotLanguage("sk", "Slovak"),
        PivotLanguage("tl", "Tagalog"),
        PivotLanguage("rw", "Kinyarwanda"),
    ];

    pub fn code(self) -> &'static str {
        self.0
    }

    pub fn name(self) -> &'static str {
        self.1
    }

    pub fn parse(code: &str) -> Result<Self, AugmentError> {
        Self::ALL.into_iter().find(|p| p.0 == code).ok_or_else(|| AugmentError::UnknownPivot(code.into()))
    }
}

/// Generation parameters carried into the variant manifest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VariantParams {
    pub backend: Option<String>,
    pub set: Option<u32>,
    pub pivot: Option<String>,
    pub k: Option<usize>,
    pub threshold: Option<usize>,
    pub seed: Option<u64>,
}

/// A derived training set plus its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSetVariant {
    pub id: String,
    pub method: Method,
    pub params: VariantParams,
    pub labels: Vec<QALabel>,
    pub generation_seconds: f64,
    pub avg_similarity: Option<f64>,
    /// Questions that fell back to the original because a backend failed.
    pub warnings: usize,
}

impl TrainingSetVariant {
    pub fn new(id: impl Into<String>, method: Method, params: VariantParams, labels: Vec<QALabel>) -> Self {
        Self { id: id.into(), method, params, labels, generation_seconds: 0.0, avg_similarity: None, warnings: 0 }
    }

    /// Content fingerprint over questions, answers, and context ids.
    pub fn fingerprint(&self) -> u64 {
        labels_fingerprint(&self.labels)
    }
}

pub fn labels_fingerprint(labels: &[QALabel]) -> u64 {
    let mut h = fnv1a(b"labels");
    for l in labels {
        h = fnv1a_extend(h, l.id.as_bytes());
        h = fnv1a_extend(h, &[0]);
        h = fnv1a_extend(h, l.question.as_bytes());
        for a in &l.answers {
            h = fnv1a_extend(h, &[1]);
            h = fnv1a_extend(h, a.as_bytes());
        }
        h = fnv1a_extend(h, &[2]);
        h = fnv1a_extend(h, l.positive_ctx.id.as_bytes());
        for n in &l.negative_ctxs {
            h = fnv1a_extend(h, &[3]);
            h = fnv1a_extend(h, n.id.as_bytes());
        }
    }
    h
}

fn with_questions(source: &[QALabel], questions: impl IntoIterator<Item = String>) -> Vec<QALabel> {
    source.iter().zip(questions).map(|(l, q)| QALabel { question: q, ..l.clone() }).collect()
}

// ---------------------------------------------------------------------------
// Backends

/// A paraphrase generator. `generate` returns up to `n` candidates in draw
/// order; duplicates are allowed.
pub trait Paraphraser {
    fn generate(&self, question: &str, n: usize) -> Vec<String>;

    fn name(&self) -> &str;
}

/// Source → pivot → source translation.
pub trait TranslatorPair {
    fn pivot(&self) -> PivotLanguage;
    fn forward(&self, text: &str) -> Result<String, TranslateError>;
    fn backward(&self, text: &str) -> Result<String, TranslateError>;

    fn name(&self) -> &str {
        "custom"
    }
}

/// Synonym candidates for a keyword, never including the keyword itself.
pub trait SynonymProvider {
    fn synonyms(&self, keyword: &str) -> Vec<String>;
}

/// Picks one keyword token from a question.
pub trait KeywordExtractor {
    fn keyword(&self, question: &str) -> Option<String>;
}

/// Always returns the question unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoParaphraser;

impl Paraphraser for EchoParaphraser {
    fn generate(&self, question: &str, n: usize) -> Vec<String> {
        (0..n).map(|_| question.to_string()).collect()
    }

    fn name(&self) -> &str {
        "echo"
    }
}

/// Cycles through a fixed candidate list.
#[derive(Debug, Clone, Default)]
pub struct CyclingParaphraser {
    pub candidates: Vec<String>,
}

impl Paraphraser for CyclingParaphraser {
    fn generate(&self, _question: &str, n: usize) -> Vec<String> {
        if self.candidates.is_empty() {
            return Vec::new();
        }
        self.candidates.iter().cycle().take(n).cloned().collect()
    }

    fn name(&self) -> &str {
        "cycle"
    }
}

/// Deterministic local paraphraser: each draw applies one seeded edit
/// (adjacent swap, stop-word drop, or stop-word insertion) to the question.
/// Draws repeat, so callers see realistic duplicate candidates.
#[derive(Debug, Clone, Copy, Default)]
pub struct ShuffleParaphraser {
    pub seed: u64,
}

const FILLERS: [&str; 4] = ["exactly", "actually", "typically", "generally"];

impl Paraphraser for ShuffleParaphraser {
    fn generate(&self, question: &str, n: usize) -> Vec<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a_extend(self.seed, question.as_bytes()));
        let tokens: Vec<&str> = question.split_whitespace().collect();
        (0..n)
            .map(|_| {
                let mut t: Vec<&str> = tokens.clone();
                if t.len() < 2 {
                    return question.to_string();
                }
                match rng.random_range(0..3) {
                    0 => {
                        let i = rng.random_range(0..t.len() - 1);
                        t.swap(i, i + 1);
                    }
                    1 => {
                        let i = rng.random_range(0..t.len());
                        if is_stopword(strip_edge_punct(t[i])) && t.len() > 2 {
                            t.remove(i);
                        }
                    }
                    _ => {
                        let i = rng.random_range(1..t.len());
                        t.insert(i, FILLERS[rng.random_range(0..FILLERS.len())]);
                    }
                }
                t.join(" ")
            })
            .collect()
    }

    fn name(&self) -> &str {
        "shuffle"
    }
}

/// Replays precomputed paraphrases (e.g. produced offline by a model).
#[derive(Debug, Clone, Default)]
pub struct TableParaphraser {
    pub name: String,
    pub table: BTreeMap<String, Vec<String>>,
}

impl Paraphraser for TableParaphraser {
    fn generate(&self, question: &str, n: usize) -> Vec<String> {
        self.table.get(question).map(|v| v.iter().take(n).cloned().collect()).unwrap_or_default()
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// `forward` and `backward` are both the identity.
#[derive(Debug, Clone, Copy)]
pub struct IdentityTranslator(pub PivotLanguage);

impl TranslatorPair for IdentityTranslator {
    fn pivot(&self) -> PivotLanguage {
        self.0
    }

    fn forward(&self, text: &str) -> Result<String, TranslateError> {
        Ok(text.into())
    }

    fn backward(&self, text: &str) -> Result<String, TranslateError> {
        Ok(text.into())
    }

    fn name(&self) -> &str {
        "identity"
    }
}

/// Reverses token order in both directions; the round trip is the identity.
#[derive(Debug, Clone, Copy)]
pub struct ReverseTranslator(pub PivotLanguage);

fn reverse_tokens(text: &str) -> String {
    let mut t: Vec<&str> = text.split_whitespace().collect();
    t.reverse();
    t.join(" ")
}

impl TranslatorPair for ReverseTranslator {
    fn pivot(&self) -> PivotLanguage {
        self.0
    }

    fn forward(&self, text: &str) -> Result<String, TranslateError> {
        Ok(reverse_tokens(text))
    }

    fn backward(&self, text: &str) -> Result<String, TranslateError> {
        Ok(reverse_tokens(text))
    }

    fn name(&self) -> &str {
        "reverse"
    }
}

/// Deterministic lossy round trip: the backward pass swaps one adjacent
/// token pair chosen from a hash of the pivot and the text, standing in for
/// the word-order drift of real machine translation.
#[derive(Debug, Clone, Copy)]
pub struct DriftTranslator(pub PivotLanguage);

impl TranslatorPair for DriftTranslator {
    fn pivot(&self) -> PivotLanguage {
        self.0
    }

    fn forward(&self, text: &str) -> Result<String, TranslateError> {
        Ok(text.into())
    }

    fn backward(&self, text: &str) -> Result<String, TranslateError> {
        let mut t: Vec<&str> = text.split_whitespace().collect();
        if t.len() >= 3 {
            let h = fnv1a_extend(fnv1a(self.0.code().as_bytes()), text.as_bytes());
            let i = (h % (t.len() as u64 - 1)) as usize;
            t.swap(i, i + 1);
        }
        Ok(t.join(" "))
    }

    fn name(&self) -> &str {
        "drift"
    }
}

/// Replays precomputed round-trip translations; unknown questions fail.
#[derive(Debug, Clone)]
pub struct TableTranslator {
    pub pivot: PivotLanguage,
    pub table: BTreeMap<String, String>,
}

impl TranslatorPair for TableTranslator {
    fn pivot(&self) -> PivotLanguage {
        self.pivot
    }

    fn forward(&self, text: &str) -> Result<String, TranslateError> {
        self.table.get(text).cloned().ok_or_else(|| TranslateError(format!("no entry for {text:?}")))
    }

    fn backward(&self, text: &str) -> Result<String, TranslateError> {
        Ok(text.into())
    }

    fn name(&self) -> &str {
        "table"
    }
}

/// Synonyms from an explicit word → list table.
#[derive(Debug, Clone, Default)]
pub struct TableSynonyms {
    pub table: BTreeMap<String, Vec<String>>,
}

impl SynonymProvider for TableSynonyms {
    fn synonyms(&self, keyword: &str) -> Vec<String> {
        let key = normalize(keyword);
        let mut out: Vec<String> = Vec::new();
        for s in self.table.get(&key).into_iter().flatten() {
            let s = normalize(s);
            if !s.is_empty() && s != key && !out.contains(&s) {
                out.push(s);
            }
        }
        out
    }
}

const STOPWORDS: [&str; 48] = [
    "a", "an", "the", "is", "are", "was", "were", "be", "been", "do", "does", "did", "what", "which", "who", "whom",
    "whose", "when", "where", "why", "how", "of", "in", "on", "at", "to", "for", "with", "by", "from", "and", "or",
    "not", "can", "could", "should", "would", "will", "it", "its", "this", "that", "these", "those", "there", "as",
    "if", "than",
];

pub fn is_stopword(token: &str) -> bool {
    let t = normalize(token);
    STOPWORDS.contains(&t.as_str())
}

/// Deterministic extractor: the longest non-stop-word token, leftmost on
/// ties.
#[derive(Debug, Clone, Copy, Default)]
pub struct LongestTokenExtractor;

impl KeywordExtractor for LongestTokenExtractor {
    fn keyword(&self, question: &str) -> Option<String> {
        let mut best: Option<String> = None;
        for t in sim_tokens(question) {
            if is_stopword(&t) || t.chars().all(|c| c.is_ascii_digit()) {
                continue;
            }
            if best.as_ref().is_none_or(|b| t.chars().count() > b.chars().count()) {
                best = Some(t);
            }
        }
        best
    }
}

// ---------------------------------------------------------------------------
// Paraphrasing

/// Draw up to `max_attempts` candidates and keep the first `want` distinct
/// ones that differ from the question (compared after normalization). Any
/// shortfall is padded with copies of the original question.
pub fn unique_paraphrases(
    question: &str,
    paraphraser: &dyn Paraphraser,
    want: usize,
    max_attempts: usize,
) -> Vec<String> {
    let original = normalize(question);
    let mut seen: Vec<String> = Vec::new();
    let mut out: Vec<String> = Vec::with_capacity(want);
    for cand in paraphraser.generate(question, max_attempts).into_iter().take(max_attempts) {
        if out.len() == want {
            break;
        }
        let norm = normalize(&cand);
        if norm.is_empty() || norm == original || seen.contains(&norm) {
            continue;
        }
        seen.push(norm);
        out.push(cand.trim().to_string());
    }
    while out.len() < want {
        out.push(question.to_string());
    }
    out
}

/// Turn five variants per question into six training sets.
///
/// Per question the variants are sorted by similarity to the original,
/// descending, ties kept in first-seen order; set `i` takes the `i`-th
/// ranked variant. Set 6 draws one of the five uniformly under `seed`.
/// Every set records its mean similarity index.
pub fn build_ranked_sets(
    source: &[QALabel],
    variants: &[Vec<String>],
    embedder: &dyn TokenEmbedder,
    seed: u64,
    method: Method,
    backend: &str,
) -> Result<Vec<TrainingSetVariant>, AugmentError> {
    if variants.len() != source.len() {
        return Err(AugmentError::Misaligned { variants: variants.len(), questions: source.len() });
    }
    let mut ranked: Vec<Vec<&str>> = Vec::with_capacity(source.len());
    for (index, (label, vs)) in source.iter().zip(variants).enumerate() {
        if vs.len() != VARIANTS_PER_QUESTION {
            return Err(AugmentError::VariantCount { index, expected: VARIANTS_PER_QUESTION, got: vs.len() });
        }
        let mut scored: Vec<(f64, &str)> =
            vs.iter().map(|v| (sentence_similarity(v, &label.question, embedder), v.as_str())).collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        ranked.push(scored.into_iter().map(|(_, v)| v).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random: Vec<&str> = variants.iter().map(|vs| vs[rng.random_range(0..VARIANTS_PER_QUESTION)].as_str()).collect();
    assemble_sets(source, embedder, seed, method, backend, |set, q| {
        if set < VARIANTS_PER_QUESTION {
            ranked[q][set].to_string()
        } else {
            random[q].to_string()
        }
    })
}

fn assemble_sets(
    source: &[QALabel],
    embedder: &dyn TokenEmbedder,
    seed: u64,
    method: Method,
    backend: &str,
    pick: impl Fn(usize, usize) -> String,
) -> Result<Vec<TrainingSetVariant>, AugmentError> {
    let originals: Vec<&str> = source.iter().map(|l| l.question.as_str()).collect();
    (0..SETS_PER_METHOD)
        .map(|set| {
            let questions: Vec<String> = (0..source.len()).map(|q| pick(set, q)).collect();
            let avg =
                if source.is_empty() { None } else { avg_similarity_index(&questions, &originals, embedder).ok() };
            let labels = with_questions(source, questions);
            let set_no = set as u32 + 1;
            let id = if backend.is_empty() {
                format!("{}-set{set_no}", method.as_str())
            } else {
                format!("{}-{backend}-set{set_no}", method.as_str())
            };
            let params = VariantParams {
                backend: (!backend.is_empty()).then(|| backend.to_string()),
                set: Some(set_no),
                seed: Some(seed),
                ..VariantParams::default()
            };
            let mut v = TrainingSetVariant::new(id, method, params, labels);
            v.avg_similarity = avg;
            Ok(v)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Word substitution

/// Keyword plus its top synonyms ranked by similarity to the keyword.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SubstitutionPlan {
    pub keyword: Option<String>,
    pub synonyms: Vec<String>,
}

impl SubstitutionPlan {
    pub fn new(
        question: &str,
        extractor: &dyn KeywordExtractor,
        provider: &dyn SynonymProvider,
        embedder: &dyn TokenEmbedder,
    ) -> Self {
        let Some(keyword) = extractor.keyword(question) else {
            return Self::default();
        };
        let key = normalize(&keyword);
        let mut syns: Vec<String> = Vec::new();
        for s in provider.synonyms(&keyword) {
            let s = normalize(&s);
            if !s.is_empty() && s != key && !syns.contains(&s) {
                syns.push(s);
            }
        }
        let mut scored: Vec<(f64, String)> =
            syns.into_iter().map(|s| (token_similarity(&s, &key, embedder), s)).collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        scored.truncate(VARIANTS_PER_QUESTION);
        Self { keyword: Some(keyword), synonyms: scored.into_iter().map(|(_, s)| s).collect() }
    }

    /// Number of usable synonyms, `n` in the `(5 - n)` padding rule.
    pub fn n(&self) -> usize {
        self.synonyms.len()
    }

    /// Variant `i` (1-based): the original question for `i <= 5 - n`,
    /// otherwise the question with synonym `i - (5 - n)` substituted.
    pub fn variant(&self, question: &str, i: usize) -> String {
        let pad = VARIANTS_PER_QUESTION - self.n();
        match (&self.keyword, i.checked_sub(pad + 1)) {
            (Some(k), Some(rank)) if rank < self.n() => replace_first(question, k, &self.synonyms[rank]),
            _ => question.to_string(),
        }
    }
}

/// Replace the first token equal to `keyword` (case-insensitive, ignoring
/// glued punctuation) with `replacement`, keeping the punctuation.
pub fn replace_first(question: &str, keyword: &str, replacement: &str) -> String {
    let key = normalize(keyword);
    let mut offset = 0;
    for tok in question.split_whitespace() {
        let start = offset + question[offset..].find(tok).unwrap_or(0);
        offset = start + tok.len();
        let core = strip_edge_punct(tok);
        if core.is_empty() || normalize(core) != key {
            continue;
        }
        let core_start = start + (core.as_ptr() as usize - tok.as_ptr() as usize);
        let mut out = String::with_capacity(question.len() + replacement.len());
        out.push_str(&question[..core_start]);
        out.push_str(&normalize(replacement));
        out.push_str(&question[core_start + core.len()..]);
        return out;
    }
    question.to_string()
}

/// The five substitution variants of one question.
pub fn substitution_variants(
    question: &str,
    extractor: &dyn KeywordExtractor,
    provider: &dyn SynonymProvider,
    embedder: &dyn TokenEmbedder,
) -> Vec<String> {
    let plan = SubstitutionPlan::new(question, extractor, provider, embedder);
    (1..=VARIANTS_PER_QUESTION).map(|i| plan.variant(question, i)).collect()
}

/// Six substitution sets: sets 1 to 5 are variant positions, set 6 uses a
/// seeded random synonym among the `n` available (original when `n = 0`).
pub fn build_substitution_sets(
    source: &[QALabel],
    extractor: &dyn KeywordExtractor,
    provider: &dyn SynonymProvider,
    embedder: &dyn TokenEmbedder,
    seed: u64,
) -> Vec<TrainingSetVariant> {
    let plans: Vec<SubstitutionPlan> =
        source.iter().map(|l| SubstitutionPlan::new(&l.question, extractor, provider, embedder)).collect();
    build_substitution_sets_from_plans(source, &plans, embedder, seed)
}

/// Same as [`build_substitution_sets`] with plans computed by the caller
/// (e.g. in parallel).
pub fn build_substitution_sets_from_plans(
    source: &[QALabel],
    plans: &[SubstitutionPlan],
    embedder: &dyn TokenEmbedder,
    seed: u64,
) -> Vec<TrainingSetVariant> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random: Vec<String> = source
        .iter()
        .zip(plans)
        .map(|(l, p)| match (&p.keyword, p.n()) {
            (Some(k), n) if n > 0 => replace_first(&l.question, k, &p.synonyms[rng.random_range(0..n)]),
            _ => l.question.clone(),
        })
        .collect();
    assemble_sets(source, embedder, seed, Method::Substitution, "", |set, q| {
        if set < VARIANTS_PER_QUESTION {
            plans[q].variant(&source[q].question, set + 1)
        } else {
            random[q].clone()
        }
    })
    .unwrap_or_default()
}

// ---------------------------------------------------------------------------
// Back translation

/// Round-trip every question through `pair`. A backend failure keeps the
/// original question and counts a warning.
pub fn back_translate_set(source: &[QALabel], pair: &dyn TranslatorPair, clock: &dyn Clock) -> TrainingSetVariant {
    let start = clock.now_seconds();
    let mut warnings = 0;
    let questions: Vec<String> = source
        .iter()
        .map(|l| match pair.forward(&l.question).and_then(|p| pair.backward(&p)) {
            Ok(q) if !q.trim().is_empty() => q,
            _ => {
                warnings += 1;
                l.question.clone()
            }
        })
        .collect();
    let pivot = pair.pivot().code();
    let params = VariantParams {
        backend: Some(pair.name().to_string()),
        pivot: Some(pivot.to_string()),
        ..VariantParams::default()
    };
    let mut v = TrainingSetVariant::new(
        format!("{}-{pivot}", Method::Backtranslation.as_str()),
        Method::Backtranslation,
        params,
        with_questions(source, questions),
    );
    v.warnings = warnings;
    v.generation_seconds = clock.now_seconds() - start;
    v
}

/// One back-translated set per pivot language, in the fixed pivot order.
pub fn back_translate_sweep<'a>(
    source: &[QALabel],
    pivots: &[PivotLanguage],
    make_pair: impl Fn(PivotLanguage) -> Box<dyn TranslatorPair + 'a>,
    clock: &dyn Clock,
) -> Vec<TrainingSetVariant> {
    pivots.iter().map(|&p| back_translate_set(source, make_pair(p).as_ref(), clock)).collect()
}
