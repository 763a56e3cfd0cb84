//! Corpus ingestion: cleaning, sentence-aware chunking, label validation,
//! deterministic 80:10:10 splitting, and answer-length statistics.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::review::ReviewTask;
use crate::text::{normalize, word_count};

/// Default passage budget in words.
pub const DEFAULT_MAX_WORDS: usize = 300;

/// Section keywords stripped from COVID-QA style abstracts.
pub const DEFAULT_STRIP_KEYWORDS: [&str; 14] = [
    "introduction:",
    "introductions:",
    "objective:",
    "objectives:",
    "conclusion:",
    "conclusions:",
    "method:",
    "methods:",
    "background:",
    "backgrounds:",
    "result:",
    "results:",
    "result(s):",
    "aim:",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("max_words must be at least 1")]
    InvalidMaxWords,
    #[error("too few labels to split: {0} (need at least 3)")]
    TooFewLabels(usize),
    #[error("threshold_words must be at least 1")]
    InvalidThreshold,
}

/// A corpus chunk: the retrieval unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub title: String,
    pub text: String,
    pub word_count: usize,
}

impl Passage {
    pub fn new(id: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let word_count = word_count(&text);
        Self { id: id.into(), title: title.into(), text, word_count }
    }
}

/// A reading-comprehension triplet with optional negative contexts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QALabel {
    pub id: String,
    pub question: String,
    pub answers: Vec<String>,
    pub positive_ctx: Passage,
    pub negative_ctxs: Vec<Passage>,
}

impl QALabel {
    /// Word count of the first answer; zero when there is none.
    pub fn first_answer_words(&self) -> usize {
        self.answers.first().map_or(0, |a| word_count(a))
    }

    /// True if any answer occurs in the positive context after normalization.
    pub fn answer_in_context(&self) -> bool {
        let ctx = normalize(&self.positive_ctx.text);
        self.answers.iter().map(|a| normalize(a)).any(|a| !a.is_empty() && ctx.contains(&a))
    }
}

/// A raw document before cleaning and chunking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningRules {
    pub strip_keywords: Vec<String>,
    pub lowercase: bool,
    pub trim: bool,
}

impl Default for CleaningRules {
    fn default() -> Self {
        Self {
            strip_keywords: DEFAULT_STRIP_KEYWORDS.iter().map(|k| k.to_string()).collect(),
            lowercase: true,
            trim: true,
        }
    }
}

impl CleaningRules {
    /// Lowercase and trim only, with no keyword stripping.
    pub fn basic() -> Self {
        Self { strip_keywords: Vec::new(), ..Self::default() }
    }

    fn is_keyword(&self, token: &str) -> bool {
        let token = lower(token);
        self.strip_keywords.iter().any(|k| lower(k) == token)
    }
}

fn lower(s: &str) -> String {
    s.chars().flat_map(char::to_lowercase).collect()
}

fn ends_sentence(token: &str) -> bool {
    token.ends_with(['.', '?', '!'])
}

/// Apply cleaning rules: drop section keywords at the start of the text or
/// of any sentence, lowercase, trim, and collapse whitespace runs.
///
/// A token is at a sentence start when it is the first kept token or the
/// previous kept token ends in `.`, `?` or `!`. Stripping repeats while the
/// next token is also a keyword, so the result is a fixed point.
pub fn clean_text(text: &str, rules: &CleaningRules) -> String {
    let mut out = String::with_capacity(text.len());
    let mut at_start = true;
    let mut first = true;
    for tok in text.split_whitespace() {
        if at_start && rules.is_keyword(tok) {
            continue;
        }
        at_start = ends_sentence(tok);
        if !first {
            out.push(' ');
        }
        first = false;
        if rules.lowercase {
            out.extend(tok.chars().flat_map(char::to_lowercase));
        } else {
            out.push_str(tok);
        }
    }
    if !rules.trim && !out.is_empty() {
        let mut padded = String::with_capacity(out.len() + 2);
        if text.starts_with(char::is_whitespace) {
            padded.push(' ');
        }
        padded.push_str(&out);
        if text.ends_with(char::is_whitespace) {
            padded.push(' ');
        }
        return padded;
    }
    out
}

/// Splits raw text into sentences.
pub trait Segmenter {
    fn sentences<'a>(&self, text: &'a str) -> Vec<&'a str>;
}

/// Rule-based splitter: a boundary follows `.`, `?` or `!` when the next
/// non-whitespace character is uppercase or a digit.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleSegmenter;

impl Segmenter for RuleSegmenter {
    fn sentences<'a>(&self, text: &'a str) -> Vec<&'a str> {
        let mut out = Vec::new();
        let mut start = 0;
        for (i, c) in text.char_indices() {
            if !matches!(c, '.' | '?' | '!') {
                continue;
            }
            let end = i + c.len_utf8();
            let rest = &text[end..];
            let trimmed = rest.trim_start();
            if trimmed.len() == rest.len() {
                continue;
            }
            let next = trimmed.chars().next();
            if next.is_some_and(|n| n.is_uppercase() || n.is_ascii_digit()) {
                let s = text[start..end].trim();
                if !s.is_empty() {
                    out.push(s);
                }
                start = end;
            }
        }
        let s = text[start..].trim();
        if !s.is_empty() {
            out.push(s);
        }
        out
    }
}

/// Chunk a document into passages of at most `max_words` words.
///
/// Sentences are segmented on the raw text, cleaned one by one, and packed
/// greedily: a sentence is appended while the chunk stays within budget. A
/// sentence longer than the budget is hard-split; its tail stays open for
/// packing. A single chunk keeps the document id, otherwise chunks are
/// suffixed `_1`, `_2`, ...
pub fn chunk_document(
    doc: &RawDocument,
    max_words: usize,
    rules: &CleaningRules,
    segmenter: &dyn Segmenter,
) -> Result<Vec<Passage>, CorpusError> {
    if max_words == 0 {
        return Err(CorpusError::InvalidMaxWords);
    }
    let mut chunks: Vec<Vec<String>> = Vec::new();
    let mut current: Vec<String> = Vec::new();
    for sentence in segmenter.sentences(&doc.text) {
        let cleaned = clean_text(sentence, rules);
        let tokens: Vec<String> = cleaned.split_whitespace().map(String::from).collect();
        if tokens.is_empty() {
            continue;
        }
        if current.len() + tokens.len() <= max_words {
            current.extend(tokens);
            continue;
        }
        if !current.is_empty() {
            chunks.push(core::mem::take(&mut current));
        }
        let mut rest = tokens;
        while rest.len() > max_words {
            let tail = rest.split_off(max_words);
            chunks.push(rest);
            rest = tail;
        }
        current = rest;
    }
    if !current.is_empty() {
        chunks.push(current);
    }
    let single = chunks.len() == 1;
    Ok(chunks
        .into_iter()
        .enumerate()
        .map(|(i, toks)| {
            let id = if single { doc.id.clone() } else { alloc::format!("{}_{}", doc.id, i + 1) };
            Passage::new(id, doc.title.clone(), toks.join(" "))
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    AnswerNotFound,
    MissingContext,
    EmptyAnswer,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::AnswerNotFound => "answer_not_found",
            Self::MissingContext => "missing_context",
            Self::EmptyAnswer => "empty_answer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejected {
    pub label: QALabel,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Validation {
    pub valid: Vec<QALabel>,
    pub rejected: Vec<Rejected>,
}

/// Keep labels whose answer occurs verbatim (after normalization) in the
/// referenced positive context.
///
/// Valid labels have their positive context replaced by the canonical
/// passage from `passages`, and any negative equal to the positive dropped.
pub fn validate_labels(labels: Vec<QALabel>, passages: &BTreeMap<String, Passage>) -> Validation {
    let mut out = Validation::default();
    for mut label in labels {
        let reason = if label.answers.iter().all(|a| a.trim().is_empty()) {
            Some(RejectReason::EmptyAnswer)
        } else if let Some(p) = passages.get(&label.positive_ctx.id) {
            label.positive_ctx = p.clone();
            if label.answer_in_context() {
                None
            } else {
                Some(RejectReason::AnswerNotFound)
            }
        } else {
            Some(RejectReason::MissingContext)
        };
        match reason {
            Some(reason) => out.rejected.push(Rejected { label, reason }),
            None => {
                let pos = label.positive_ctx.id.clone();
                label.negative_ctxs.retain(|n| n.id != pos);
                out.valid.push(label);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<QALabel>,
    pub dev: Vec<QALabel>,
    pub test: Vec<QALabel>,
    pub seed: u64,
}

/// Sizes for an 80:10:10 split of `n` labels: train takes `floor(0.8 n)`,
/// dev takes half the remainder rounded down, test takes the rest.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = n * 8 / 10;
    let rest = n - train;
    let dev = rest / 2;
    (train, dev, rest - dev)
}

/// Shuffle deterministically under `seed` and cut 80:10:10.
pub fn split_dataset(mut labels: Vec<QALabel>, seed: u64) -> Result<DatasetSplit, CorpusError> {
    if labels.len() < 3 {
        return Err(CorpusError::TooFewLabels(labels.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    labels.shuffle(&mut rng);
    let (n_train, n_dev, _) = split_sizes(labels.len());
    let mut dev = labels.split_off(n_train);
    let test = dev.split_off(n_dev);
    Ok(DatasetSplit { train: labels, dev, test, seed })
}

/// Counts of first-answer word lengths, one bucket per word count from
/// `first` (1, or 0 when empty answers occur) up to the longest answer.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthHistogram {
    pub first: usize,
    pub counts: Vec<usize>,
}

impl LengthHistogram {
    pub fn from_lengths(lengths: &[usize]) -> Self {
        let Some(&max) = lengths.iter().max() else {
            return Self { first: 1, counts: Vec::new() };
        };
        let first = if lengths.contains(&0) { 0 } else { 1 };
        let mut counts = alloc::vec![0; max + 1 - first];
        for &l in lengths {
            counts[l - first] += 1;
        }
        Self { first, counts }
    }

    /// `(word_count, labels)` pairs for every bucket.
    pub fn buckets(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.counts.iter().enumerate().map(move |(i, &c)| (i + self.first, c))
    }

    pub fn max_len(&self) -> usize {
        (self.first + self.counts.len()).saturating_sub(1)
    }

    pub fn get(&self, len: usize) -> usize {
        len.checked_sub(self.first).and_then(|i| self.counts.get(i)).copied().unwrap_or(0)
    }

    /// Mean length recomputed from the buckets; `None` when empty.
    pub fn mean(&self) -> Option<f64> {
        let n: usize = self.counts.iter().sum();
        if n == 0 {
            return None;
        }
        let total: usize = self.buckets().map(|(l, c)| l * c).sum();
        Some(total as f64 / n as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartStats {
    pub labels: usize,
    pub mean_answer_words: Option<f64>,
    pub histogram: LengthHistogram,
}

impl PartStats {
    pub fn of(labels: &[QALabel]) -> Self {
        let lengths: Vec<usize> = labels.iter().map(QALabel::first_answer_words).collect();
        let mean =
            if lengths.is_empty() { None } else { Some(lengths.iter().sum::<usize>() as f64 / lengths.len() as f64) };
        Self { labels: labels.len(), mean_answer_words: mean, histogram: LengthHistogram::from_lengths(&lengths) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub train: PartStats,
    pub dev: PartStats,
    pub test: PartStats,
}

pub fn corpus_stats(split: &DatasetSplit) -> CorpusStats {
    CorpusStats { train: PartStats::of(&split.train), dev: PartStats::of(&split.dev), test: PartStats::of(&split.test) }
}

/// One pending review task per label whose first answer is longer than
/// `threshold_words`, longest first, ties by label id.
pub fn flag_long_answers(labels: &[QALabel], threshold_words: usize) -> Result<Vec<ReviewTask>, CorpusError> {
    if threshold_words == 0 {
        return Err(CorpusError::InvalidThreshold);
    }
    let mut flagged: Vec<(usize, &QALabel)> =
        labels.iter().map(|l| (l.first_answer_words(), l)).filter(|(len, _)| *len > threshold_words).collect();
    flagged.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.id.cmp(&b.1.id)));
    Ok(flagged.into_iter().map(|(_, l)| ReviewTask::for_label(l)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;

    fn doc(text: &str) -> RawDocument {
        RawDocument { id: "d".into(), title: String::new(), text: text.into() }
    }

    fn label(id: &str, answer: &str, ctx: &str) -> QALabel {
        QALabel {
            id: id.into(),
            question: "q?".into(),
            answers: vec![answer.into()],
            positive_ctx: Passage::new(format!("p-{id}"), "", ctx),
            negative_ctxs: vec![],
        }
    }

    #[test]
    fn clean_text_examples() {
        let rules = CleaningRules::default();
        assert_eq!(clean_text("Introduction: We study sleep.", &rules), "we study sleep.");
        assert_eq!(clean_text("  hello  ", &rules), "hello");
        assert_eq!(clean_text("Results: A. Methods: B", &rules), "a. b");
    }

    #[test]
    fn clean_text_only_strips_at_sentence_start() {
        let rules = CleaningRules::default();
        assert_eq!(clean_text("the aim: is clear", &rules), "the aim: is clear");
        assert_eq!(clean_text("Results: Methods: x", &rules), "x");
        assert_eq!(clean_text("RESULT(S): done", &rules), "done");
    }

    #[test]
    fn chunk_empty_document() {
        let out = chunk_document(&doc(""), 300, &CleaningRules::default(), &RuleSegmenter).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn chunk_single_sentence_fits() {
        let text = (0..100).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let out = chunk_document(&doc(&text), 300, &CleaningRules::default(), &RuleSegmenter).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].word_count, 100);
        assert_eq!(out[0].id, "d");
    }

    #[test]
    fn chunk_greedy_packing_thirteen_sentences() {
        // 13 sentences of 50 words: six fit per 300-word chunk.
        let sentence = |s: usize| {
            let mut words: Vec<String> = (0..50).map(|i| format!("w{s}x{i}")).collect();
            words[0] = format!("S{s}");
            words[49].push('.');
            words.join(" ")
        };
        let text = (0..13).map(sentence).collect::<Vec<_>>().join(" ");
        let out = chunk_document(&doc(&text), 300, &CleaningRules::default(), &RuleSegmenter).unwrap();
        let counts: Vec<usize> = out.iter().map(|p| p.word_count).collect();
        assert_eq!(counts, [300, 300, 50]);
        assert_eq!(out[2].id, "d_3");
    }

    #[test]
    fn chunk_hard_splits_long_sentence() {
        let text = (0..25).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let out = chunk_document(&doc(&text), 10, &CleaningRules::default(), &RuleSegmenter).unwrap();
        let counts: Vec<usize> = out.iter().map(|p| p.word_count).collect();
        assert_eq!(counts, [10, 10, 5]);
    }

    #[test]
    fn chunk_rejects_zero_budget() {
        assert_eq!(
            chunk_document(&doc("a"), 0, &CleaningRules::default(), &RuleSegmenter),
            Err(CorpusError::InvalidMaxWords)
        );
    }

    #[test]
    fn segmenter_requires_capital_or_digit() {
        let s = RuleSegmenter.sentences("It works. e.g. this. 3 cases! Next?");
        assert_eq!(s, ["It works. e.g. this.", "3 cases!", "Next?"]);
    }

    #[test]
    fn validate_examples() {
        let mut passages = BTreeMap::new();
        let ok = label("a", "melatonin", "… melatonin regulates sleep …");
        let missing = label("b", "REM sleep", "deep sleep only");
        let mut dangling = label("c", "x", "x");
        dangling.positive_ctx.id = "nowhere".into();
        let empty = label("d", "  ", "x");
        for l in [&ok, &missing] {
            passages.insert(l.positive_ctx.id.clone(), l.positive_ctx.clone());
        }
        let v = validate_labels(vec![ok.clone(), missing, dangling, empty], &passages);
        assert_eq!(v.valid, vec![ok]);
        let reasons: Vec<_> = v.rejected.iter().map(|r| r.reason).collect();
        assert_eq!(reasons, [RejectReason::AnswerNotFound, RejectReason::MissingContext, RejectReason::EmptyAnswer]);
    }

    #[test]
    fn validate_uses_shared_normalization() {
        let l = label("a", "REM   Sleep", "during rem sleep the");
        let mut passages = BTreeMap::new();
        passages.insert(l.positive_ctx.id.clone(), l.positive_ctx.clone());
        assert_eq!(validate_labels(vec![l], &passages).valid.len(), 1);
    }

    #[test]
    fn split_sizes_follow_table() {
        assert_eq!(split_sizes(957), (765, 96, 96));
        assert_eq!(split_sizes(5000), (4000, 500, 500));
        assert_eq!(split_sizes(10), (8, 1, 1));
        assert_eq!(split_sizes(1121), (896, 112, 113));
    }

    #[test]
    fn split_too_few() {
        let labels = vec![label("a", "x", "x"), label("b", "x", "x")];
        assert_eq!(split_dataset(labels, 1), Err(CorpusError::TooFewLabels(2)));
    }

    #[test]
    fn stats_means() {
        let mut l1 = label("a", "one two three", "");
        let l2 = label("b", "one two three four five", "");
        let split = DatasetSplit { train: vec![l1.clone(), l2], dev: vec![], test: vec![], seed: 0 };
        let s = corpus_stats(&split);
        assert_eq!(s.train.mean_answer_words, Some(4.0));
        assert_eq!(s.dev.mean_answer_words, None);
        assert_eq!(s.train.histogram.buckets().collect::<Vec<_>>(), [(1, 0), (2, 0), (3, 1), (4, 0), (5, 1)]);
        l1.answers = vec!["a b c d e f g".into()];
        let single = DatasetSplit { train: vec![l1], dev: vec![], test: vec![], seed: 0 };
        assert_eq!(corpus_stats(&single).train.mean_answer_words, Some(7.0));
    }

    #[test]
    fn flag_long_answers_orders_by_length() {
        let words = |n: usize| (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let labels = vec![label("a", &words(10), ""), label("b", &words(31), ""), label("c", &words(45), "")];
        let tasks = flag_long_answers(&labels, 30).unwrap();
        assert_eq!(tasks.len(), 2);
        assert_eq!(tasks[0].label_id, "c");
        assert_eq!(tasks[1].label_id, "b");
        assert_eq!(flag_long_answers(&labels, 15).unwrap().len(), 2);
        assert!(flag_long_answers(&labels, 45).unwrap().is_empty());
        assert_eq!(flag_long_answers(&labels, 0), Err(CorpusError::InvalidThreshold));
    }
}
