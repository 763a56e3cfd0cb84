//! Evaluation harness: metrics, the score ledger, continual fine-tuning
//! planning, augmentation by concatenation, and cost-benefit arithmetic.
//!
//! Fine-tuning itself sits behind [`Trainer`]. [`StubTrainer`] is a
//! deterministic CPU-only backend whose scores come from an injected table.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::augment::{labels_fingerprint, Method, TrainingSetVariant, VariantParams};
use crate::corpus::QALabel;
use crate::text::{normalize, round1};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error("aligned inputs differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("no values to evaluate")]
    Empty,
    #[error("no improving training sets")]
    NoImprovingSets,
    #[error("unknown variant {0}")]
    UnknownVariant(String),
    #[error("ledger has no baseline row")]
    NoBaseline,
    #[error("ledger has more than one baseline row")]
    DuplicateBaseline,
    #[error("baseline fine-tuning failed: {0}")]
    BaselineFailed(TrainerError),
    #[error(transparent)]
    Trainer(#[from] TrainerError),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct TrainerError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Retrieval,
    Reader,
}

impl EvalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Retrieval => "retrieval",
            Self::Reader => "reader",
        }
    }

    pub fn metric_name(self) -> &'static str {
        match self {
            Self::Retrieval => "recall@1",
            Self::Reader => "EM",
        }
    }
}

/// Fine-tuning hyperparameters. Fields that only apply to one model kind
/// are `None` for the other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams {
    pub batch_size: u32,
    pub dev_batch_size: u32,
    pub adam_eps: f64,
    pub adam_betas: (f64, f64),
    pub max_grad_norm: f64,
    pub log_batch_step: u32,
    pub train_rolling_loss_step: u32,
    pub weight_decay: f64,
    pub learning_rate: f64,
    pub warmup_steps: u32,
    pub gradient_accumulation_steps: u32,
    pub num_train_epochs: u32,
    pub eval_per_epoch: Option<u32>,
    pub eval_step: Option<u32>,
    pub hard_negatives: Option<u32>,
    pub other_negatives: Option<u32>,
    pub val_av_rank_hard_neg: Option<u32>,
    pub val_av_rank_other_neg: Option<u32>,
    pub val_av_rank_bsz: Option<u32>,
    pub val_av_rank_max_qs: Option<u32>,
}

impl Hyperparams {
    fn common(warmup_steps: u32, num_train_epochs: u32) -> Self {
        Self {
            batch_size: 32,
            dev_batch_size: 32,
            adam_eps: 1e-8,
            adam_betas: (0.9, 0.999),
            max_grad_norm: 1.0,
            log_batch_step: 100,
            train_rolling_loss_step: 100,
            weight_decay: 0.0,
            learning_rate: 1e-5,
            warmup_steps,
            gradient_accumulation_steps: 1,
            num_train_epochs,
            eval_per_epoch: None,
            eval_step: None,
            hard_negatives: None,
            other_negatives: None,
            val_av_rank_hard_neg: None,
            val_av_rank_other_neg: None,
            val_av_rank_bsz: None,
            val_av_rank_max_qs: None,
        }
    }

    pub fn retrieval() -> Self {
        Self {
            eval_per_epoch: Some(1),
            hard_negatives: Some(0),
            other_negatives: Some(1),
            val_av_rank_hard_neg: Some(0),
            val_av_rank_other_neg: Some(10),
            val_av_rank_bsz: Some(128),
            val_av_rank_max_qs: Some(10_000),
            ..Self::common(100, 30)
        }
    }

    /// Reader defaults with `eval_step` 50; large training sets (4,000
    /// labels) use 500.
    pub fn reader() -> Self {
        Self { eval_step: Some(50), ..Self::common(0, 10) }
    }

    pub fn for_mode(mode: EvalMode) -> Self {
        match mode {
            EvalMode::Retrieval => Self::retrieval(),
            EvalMode::Reader => Self::reader(),
        }
    }

    /// Continual stages train for 60 (retrieval) or 30 (reader) epochs.
    pub fn continual(mode: EvalMode) -> Self {
        let mut hp = Self::for_mode(mode);
        hp.num_train_epochs = match mode {
            EvalMode::Retrieval => 60,
            EvalMode::Reader => 30,
        };
        hp
    }
}

// ---------------------------------------------------------------------------
// Metrics

fn check_aligned(left: usize, right: usize) -> Result<(), HarnessError> {
    if left != right {
        return Err(HarnessError::LengthMismatch { left, right });
    }
    if left == 0 {
        return Err(HarnessError::Empty);
    }
    Ok(())
}

fn percent(matches: usize, n: usize) -> f64 {
    round1(100.0 * matches as f64 / n as f64)
}

/// Percentage of questions whose top-1 passage is the gold positive, to one
/// decimal.
pub fn recall_at_1<A: AsRef<str>, B: AsRef<str>>(top1: &[A], gold: &[B]) -> Result<f64, HarnessError> {
    check_aligned(top1.len(), gold.len())?;
    let m = top1.iter().zip(gold).filter(|(t, g)| t.as_ref() == g.as_ref()).count();
    Ok(percent(m, top1.len()))
}

/// Percentage of predictions equal to any gold answer after lowercasing,
/// trimming, and whitespace collapsing, to one decimal.
pub fn exact_match<P: AsRef<str>, G: AsRef<str>>(predictions: &[P], golds: &[Vec<G>]) -> Result<f64, HarnessError> {
    check_aligned(predictions.len(), golds.len())?;
    let m = predictions
        .iter()
        .zip(golds)
        .filter(|(p, gs)| {
            let p = normalize(p.as_ref());
            gs.iter().any(|g| normalize(g.as_ref()) == p)
        })
        .count();
    Ok(percent(m, predictions.len()))
}

/// Sample mean and sample standard deviation (divisor `n - 1`), both to
/// one decimal. A single value has deviation 0.
pub fn summarize_scores(values: &[f64]) -> Result<(f64, f64), HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::Empty);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() == 1 {
        0.0
    } else {
        libm::sqrt(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0))
    };
    Ok((round1(mean), round1(std)))
}

// ---------------------------------------------------------------------------
// Ledger

/// Row families, in result-table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Baseline,
    Negatives,
    Paraphrase,
    Substitution,
    Backtranslation,
    AnswerShortening,
    Continual,
    Augmentation,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::Baseline,
        Family::Negatives,
        Family::Paraphrase,
        Family::Substitution,
        Family::Backtranslation,
        Family::AnswerShortening,
        Family::Continual,
        Family::Augmentation,
    ];

    pub fn of(method: Method) -> Self {
        match method {
            Method::Original => Self::Baseline,
            Method::Negatives => Self::Negatives,
            Method::Paraphrase => Self::Paraphrase,
            Method::Substitution => Self::Substitution,
            Method::Backtranslation => Self::Backtranslation,
            Method::AnswerShortening => Self::AnswerShortening,
            Method::AugmentationConcat => Self::Augmentation,
        }
    }

    /// Value of the ledger CSV `method` column.
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::Continual => "continual",
            Self::Negatives => Method::Negatives.as_str(),
            Self::Paraphrase => Method::Paraphrase.as_str(),
            Self::Substitution => Method::Substitution.as_str(),
            Self::Backtranslation => Method::Backtranslation.as_str(),
            Self::AnswerShortening => Method::AnswerShortening.as_str(),
            Self::Augmentation => Method::AugmentationConcat.as_str(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.as_str() == s)
    }

    /// Row label in rendered result tables.
    pub fn title(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::Negatives => "negatives",
            Self::Paraphrase => "paraphrasing",
            Self::Substitution => "word substitution",
            Self::Backtranslation => "back translation",
            Self::AnswerShortening => "answer shortening",
            Self::Continual => "continual",
            Self::Augmentation => "augmentation",
        }
    }

    /// Families produced by a single enhancement method, eligible for
    /// continual chaining and concatenation.
    pub fn is_method(self) -> bool {
        !matches!(self, Self::Baseline | Self::Continual | Self::Augmentation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Baseline,
    Improved,
    Equal,
    Worse,
    Failed,
    #[serde(rename = "n/a")]
    NotApplicable,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::Improved => "improved",
            Self::Equal => "equal",
            Self::Worse => "worse",
            Self::Failed => "failed",
            Self::NotApplicable => "n/a",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Baseline, Self::Improved, Self::Equal, Self::Worse, Self::Failed, Self::NotApplicable]
            .into_iter()
            .find(|o| o.as_str() == s)
    }

    /// Classification of a one-decimal delta.
    pub fn of_delta(delta: f64) -> Self {
        let d = round1(delta);
        if d > 0.0 {
            Self::Improved
        } else if d < 0.0 {
            Self::Worse
        } else {
            Self::Equal
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub variant_id: String,
    pub family: Family,
    pub metric: Option<f64>,
    pub delta: Option<f64>,
    pub outcome: Outcome,
    pub ft_seconds: f64,
    pub gen_seconds: f64,
    pub checkpoint: Option<String>,
}

/// Per-variant results for one dataset and mode, with the baseline row
/// present exactly once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreLedger {
    pub mode: EvalMode,
    rows: Vec<LedgerRow>,
}

impl ScoreLedger {
    pub fn new(mode: EvalMode, variant_id: &str, metric: f64, ft_seconds: f64, checkpoint: Option<String>) -> Self {
        let row = LedgerRow {
            variant_id: variant_id.into(),
            family: Family::Baseline,
            metric: Some(round1(metric)),
            delta: Some(0.0),
            outcome: Outcome::Baseline,
            ft_seconds,
            gen_seconds: 0.0,
            checkpoint,
        };
        Self { mode, rows: alloc::vec![row] }
    }

    /// Rebuild from stored rows, checking the single-baseline invariant.
    pub fn from_rows(mode: EvalMode, rows: Vec<LedgerRow>) -> Result<Self, HarnessError> {
        match rows.iter().filter(|r| r.family == Family::Baseline).count() {
            0 => Err(HarnessError::NoBaseline),
            1 => Ok(Self { mode, rows }),
            _ => Err(HarnessError::DuplicateBaseline),
        }
    }

    pub fn rows(&self) -> &[LedgerRow] {
        &self.rows
    }

    pub fn baseline(&self) -> &LedgerRow {
        self.rows.iter().find(|r| r.family == Family::Baseline).expect("ledger invariant: one baseline row")
    }

    pub fn baseline_metric(&self) -> f64 {
        self.baseline().metric.unwrap_or(0.0)
    }

    pub fn row(&self, variant_id: &str) -> Option<&LedgerRow> {
        self.rows.iter().find(|r| r.variant_id == variant_id)
    }

    /// Append a scored row; delta and classification follow from the
    /// baseline at one-decimal precision.
    pub fn record(
        &mut self,
        variant_id: &str,
        family: Family,
        metric: f64,
        ft_seconds: f64,
        gen_seconds: f64,
        checkpoint: Option<String>,
    ) {
        let metric = round1(metric);
        let delta = round1(metric - self.baseline_metric());
        self.rows.push(LedgerRow {
            variant_id: variant_id.into(),
            family,
            metric: Some(metric),
            delta: Some(delta),
            outcome: Outcome::of_delta(delta),
            ft_seconds,
            gen_seconds,
            checkpoint,
        });
    }

    /// Append a row without a metric (`Failed` or `NotApplicable`).
    pub fn record_unscored(&mut self, variant_id: &str, family: Family, outcome: Outcome, gen_seconds: f64) {
        self.rows.push(LedgerRow {
            variant_id: variant_id.into(),
            family,
            metric: None,
            delta: None,
            outcome,
            ft_seconds: 0.0,
            gen_seconds,
            checkpoint: None,
        });
    }

    /// Best scored row of a family, ties by variant id.
    pub fn best_of(&self, family: Family) -> Option<&LedgerRow> {
        self.rows.iter().filter(|r| r.family == family && r.metric.is_some()).min_by(|a, b| {
            b.metric.unwrap().total_cmp(&a.metric.unwrap()).then_with(|| a.variant_id.cmp(&b.variant_id))
        })
    }
}

// ---------------------------------------------------------------------------
// Trainer interface

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Checkpoint(pub String);

/// Fine-tunes and evaluates retrieval or reader models. Implementations
/// must be deterministic for a given checkpoint, set, and hyperparameters.
pub trait Trainer {
    fn name(&self) -> &str;

    fn fine_tune(
        &mut self,
        start: &Checkpoint,
        set: &TrainingSetVariant,
        hyperparams: &Hyperparams,
    ) -> Result<(Checkpoint, f64), TrainerError>;

    /// Top-1 passage id per test question.
    fn evaluate_retrieval(&mut self, checkpoint: &Checkpoint, test: &[QALabel]) -> Result<Vec<String>, TrainerError>;

    /// Predicted answer string per test question.
    fn evaluate_reader(&mut self, checkpoint: &Checkpoint, test: &[QALabel]) -> Result<Vec<String>, TrainerError>;
}

/// Score a checkpoint on the test set with the mode's metric.
pub fn evaluate(
    trainer: &mut dyn Trainer,
    checkpoint: &Checkpoint,
    test: &[QALabel],
    mode: EvalMode,
) -> Result<f64, HarnessError> {
    match mode {
        EvalMode::Retrieval => {
            let top1 = trainer.evaluate_retrieval(checkpoint, test)?;
            let gold: Vec<&str> = test.iter().map(|l| l.positive_ctx.id.as_str()).collect();
            recall_at_1(&top1, &gold)
        }
        EvalMode::Reader => {
            let preds = trainer.evaluate_reader(checkpoint, test)?;
            let golds: Vec<Vec<&str>> = test.iter().map(|l| l.answers.iter().map(String::as_str).collect()).collect();
            exact_match(&preds, &golds)
        }
    }
}

fn hyperparams_for(set: &TrainingSetVariant, base: &Hyperparams) -> Hyperparams {
    let mut hp = base.clone();
    if let (Some(k), Some(_)) = (set.params.k, hp.other_negatives) {
        hp.other_negatives = Some(k as u32);
    }
    hp
}

fn train_and_score(
    trainer: &mut dyn Trainer,
    start: &Checkpoint,
    set: &TrainingSetVariant,
    hp: &Hyperparams,
    test: &[QALabel],
    mode: EvalMode,
) -> Result<(f64, Checkpoint, f64), HarnessError> {
    let (ckpt, secs) = trainer.fine_tune(start, set, &hyperparams_for(set, hp))?;
    let metric = evaluate(trainer, &ckpt, test, mode)?;
    Ok((metric, ckpt, secs))
}

/// Fine-tune the start checkpoint on the original set and on every variant
/// independently. A failing variant is recorded as `Failed` and the suite
/// continues.
pub fn run_individual_suite(
    start: &Checkpoint,
    original: &TrainingSetVariant,
    variants: &[TrainingSetVariant],
    trainer: &mut dyn Trainer,
    test: &[QALabel],
    mode: EvalMode,
    hyperparams: &Hyperparams,
) -> Result<ScoreLedger, HarnessError> {
    let (metric, ckpt, secs) =
        train_and_score(trainer, start, original, hyperparams, test, mode).map_err(|e| match e {
            HarnessError::Trainer(t) => HarnessError::BaselineFailed(t),
            other => other,
        })?;
    let mut ledger = ScoreLedger::new(mode, &original.id, metric, secs, Some(ckpt.0));
    for v in variants {
        let family = Family::of(v.method);
        match train_and_score(trainer, start, v, hyperparams, test, mode) {
            Ok((metric, ckpt, secs)) => ledger.record(&v.id, family, metric, secs, v.generation_seconds, Some(ckpt.0)),
            Err(_) => ledger.record_unscored(&v.id, family, Outcome::Failed, v.generation_seconds),
        }
    }
    Ok(ledger)
}

/// Order improving variants for continual fine-tuning: delta > 0, by delta
/// descending then variant id. With `per_family`, only the best variant of
/// each method family is kept.
pub fn plan_continual(ledger: &ScoreLedger, per_family: bool) -> Vec<String> {
    let mut eligible: Vec<&LedgerRow> =
        ledger.rows().iter().filter(|r| r.family.is_method() && r.delta.is_some_and(|d| round1(d) > 0.0)).collect();
    eligible
        .sort_by(|a, b| b.delta.unwrap().total_cmp(&a.delta.unwrap()).then_with(|| a.variant_id.cmp(&b.variant_id)));
    let mut seen = BTreeSet::new();
    eligible.into_iter().filter(|r| !per_family || seen.insert(r.family)).map(|r| r.variant_id.clone()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinualOutcome {
    pub metric: f64,
    pub checkpoint: Checkpoint,
    /// Fine-tuning time of the chain stages only.
    pub ft_seconds: f64,
    pub stages: Vec<String>,
}

/// Chain fine-tuning along `plan`, each stage starting from the previous
/// stage's checkpoint, then evaluate the final checkpoint.
pub fn run_continual(
    plan: &[String],
    variants: &[TrainingSetVariant],
    start: &Checkpoint,
    trainer: &mut dyn Trainer,
    hyperparams: &Hyperparams,
    test: &[QALabel],
    mode: EvalMode,
) -> Result<ContinualOutcome, HarnessError> {
    if plan.is_empty() {
        return Err(HarnessError::NoImprovingSets);
    }
    let mut ckpt = start.clone();
    let mut total = 0.0;
    for id in plan {
        let set = variants.iter().find(|v| &v.id == id).ok_or_else(|| HarnessError::UnknownVariant(id.clone()))?;
        let (next, secs) = trainer.fine_tune(&ckpt, set, &hyperparams_for(set, hyperparams))?;
        ckpt = next;
        total += secs;
    }
    let metric = evaluate(trainer, &ckpt, test, mode)?;
    Ok(ContinualOutcome { metric, checkpoint: ckpt, ft_seconds: total, stages: plan.to_vec() })
}

impl ScoreLedger {
    /// Record a continual run; an empty plan becomes an `n/a` row.
    pub fn record_continual(&mut self, result: &Result<ContinualOutcome, HarnessError>) {
        match result {
            Ok(c) => {
                self.record("continual", Family::Continual, c.metric, c.ft_seconds, 0.0, Some(c.checkpoint.0.clone()))
            }
            Err(HarnessError::NoImprovingSets) => {
                self.record_unscored("continual", Family::Continual, Outcome::NotApplicable, 0.0)
            }
            Err(_) => self.record_unscored("continual", Family::Continual, Outcome::Failed, 0.0),
        }
    }
}

/// Concatenate the labels of improving variants in the given order, without
/// deduplication.
pub fn concat_augmented(variants: &[&TrainingSetVariant]) -> Result<TrainingSetVariant, HarnessError> {
    if variants.is_empty() {
        return Err(HarnessError::NoImprovingSets);
    }
    let labels: Vec<QALabel> = variants.iter().flat_map(|v| v.labels.iter().cloned()).collect();
    let sources: Vec<&str> = variants.iter().map(|v| v.id.as_str()).collect();
    let params = VariantParams { backend: Some(sources.join("+")), ..VariantParams::default() };
    Ok(TrainingSetVariant::new("augmentation", Method::AugmentationConcat, params, labels))
}

// ---------------------------------------------------------------------------
// Cost-benefit

/// Relative change of `best` against `baseline` as a rounded integer
/// percentage magnitude plus its direction. `None` when the baseline is not
/// positive.
pub fn relative_change(baseline: f64, best: f64) -> Option<(u32, Outcome)> {
    if baseline <= 0.0 {
        return None;
    }
    let rel = 100.0 * (round1(best) - round1(baseline)) / round1(baseline);
    Some((libm::round(libm::fabs(rel)) as u32, Outcome::of_delta(best - baseline)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub family: Family,
    /// Fine-tuning hours summed over the family's rows, one decimal.
    pub hours: f64,
    pub best_metric: Option<f64>,
    pub relative_pct: Option<u32>,
    pub outcome: Outcome,
    /// Continual and augmentation hours cover only their own stage; the
    /// total also needs every individual row above them.
    pub stage_only: bool,
}

/// One row per family present in the ledger, in table order.
pub fn cost_benefit(ledger: &ScoreLedger) -> Vec<CostRow> {
    let baseline = ledger.baseline_metric();
    Family::ALL
        .into_iter()
        .filter_map(|family| {
            let rows: Vec<&LedgerRow> = ledger.rows().iter().filter(|r| r.family == family).collect();
            if rows.is_empty() {
                return None;
            }
            let secs: f64 = rows.iter().map(|r| r.ft_seconds).sum();
            let best = ledger.best_of(family).and_then(|r| r.metric);
            let (relative_pct, outcome) = match (family, best) {
                (Family::Baseline, _) => (None, Outcome::Baseline),
                (_, Some(b)) => match relative_change(baseline, b) {
                    Some((pct, o)) => (Some(pct), o),
                    None => (None, Outcome::of_delta(b - baseline)),
                },
                (_, None) => (None, rows[0].outcome),
            };
            Some(CostRow {
                family,
                hours: round1(secs / 3600.0),
                best_metric: best,
                relative_pct,
                outcome,
                stage_only: matches!(family, Family::Continual | Family::Augmentation),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Stub backend

/// Deterministic trainer for CPU-only runs.
///
/// Fine-tuning from the base checkpoint scores a set by looking its id up in
/// the injected table, falling back to `base_score` shifted by a
/// fingerprint-derived offset in [-5, +5]. Fine-tuning from any other
/// checkpoint adds `chain_step` to that checkpoint's score. Evaluation
/// returns exactly `round(score% × N)` correct predictions.
///
/// Checkpoint handles are `stub:<score>:<fingerprint>`, so a handle can be
/// evaluated by a different process than the one that produced it.
#[derive(Debug, Clone)]
pub struct StubTrainer {
    pub base: Checkpoint,
    pub base_score: f64,
    pub table: BTreeMap<String, f64>,
    pub chain_step: f64,
    /// Simulated seconds per label per epoch.
    pub seconds_per_label_epoch: f64,
    /// Variant ids whose fine-tuning fails.
    pub failing: BTreeSet<String>,
}

impl StubTrainer {
    pub fn new(base_score: f64, table: BTreeMap<String, f64>) -> Self {
        Self {
            base: Checkpoint("base".into()),
            base_score,
            table,
            chain_step: 0.5,
            seconds_per_label_epoch: 0.01,
            failing: BTreeSet::new(),
        }
    }

    pub fn score_of(&self, checkpoint: &Checkpoint) -> Option<f64> {
        if *checkpoint == self.base {
            return Some(self.base_score);
        }
        let mut parts = checkpoint.0.strip_prefix("stub:")?.split(':');
        let score = parts.next()?.parse().ok()?;
        parts.next()?;
        Some(score)
    }

    fn individual_score(&self, set: &TrainingSetVariant) -> f64 {
        self.table.get(&set.id).copied().unwrap_or_else(|| {
            let offset = (labels_fingerprint(&set.labels) % 101) as f64 / 10.0 - 5.0;
            self.base_score + offset
        })
    }

    fn correct(&self, checkpoint: &Checkpoint, n: usize) -> Result<usize, TrainerError> {
        let s =
            self.score_of(checkpoint).ok_or_else(|| TrainerError(format!("unknown checkpoint {}", checkpoint.0)))?;
        Ok(libm::round(s / 100.0 * n as f64) as usize)
    }
}

impl Trainer for StubTrainer {
    fn name(&self) -> &str {
        "stub"
    }

    fn fine_tune(
        &mut self,
        start: &Checkpoint,
        set: &TrainingSetVariant,
        hp: &Hyperparams,
    ) -> Result<(Checkpoint, f64), TrainerError> {
        if self.failing.contains(&set.id) {
            return Err(TrainerError(format!("injected failure for {}", set.id)));
        }
        let score = if *start == self.base {
            self.individual_score(set)
        } else {
            let s = self.score_of(start).ok_or_else(|| TrainerError(format!("unknown checkpoint {}", start.0)))?;
            s + self.chain_step
        };
        let ckpt = Checkpoint(format!("stub:{}:{:016x}", score.clamp(0.0, 100.0), set.fingerprint()));
        let secs = set.labels.len() as f64 * f64::from(hp.num_train_epochs) * self.seconds_per_label_epoch;
        Ok((ckpt, secs))
    }

    fn evaluate_retrieval(&mut self, checkpoint: &Checkpoint, test: &[QALabel]) -> Result<Vec<String>, TrainerError> {
        let m = self.correct(checkpoint, test.len())?;
        Ok(test
            .iter()
            .enumerate()
            .map(|(i, l)| if i < m { l.positive_ctx.id.clone() } else { "__miss__".to_string() })
            .collect())
    }

    fn evaluate_reader(&mut self, checkpoint: &Checkpoint, test: &[QALabel]) -> Result<Vec<String>, TrainerError> {
        let m = self.correct(checkpoint, test.len())?;
        Ok(test
            .iter()
            .enumerate()
            .map(|(i, l)| if i < m { l.answers.first().cloned().unwrap_or_default() } else { String::new() })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Passage;
    use alloc::vec;

    fn test_set(n: usize) -> Vec<QALabel> {
        (0..n)
            .map(|i| QALabel {
                id: format!("t{i}"),
                question: "q".into(),
                answers: vec![format!("a{i}")],
                positive_ctx: Passage::new(format!("p{i}"), "", "x"),
                negative_ctxs: vec![],
            })
            .collect()
    }

    fn variant(id: &str, method: Method) -> TrainingSetVariant {
        TrainingSetVariant::new(id, method, VariantParams::default(), test_set(3))
    }

    #[test]
    fn hyperparam_defaults() {
        let r = Hyperparams::retrieval();
        assert_eq!((r.batch_size, r.warmup_steps, r.num_train_epochs), (32, 100, 30));
        assert_eq!(r.val_av_rank_max_qs, Some(10_000));
        assert_eq!(r.hard_negatives, Some(0));
        let d = Hyperparams::reader();
        assert_eq!((d.warmup_steps, d.num_train_epochs, d.eval_step), (0, 10, Some(50)));
        assert_eq!(Hyperparams::continual(EvalMode::Retrieval).num_train_epochs, 60);
        assert_eq!(Hyperparams::continual(EvalMode::Reader).num_train_epochs, 30);
    }

    #[test]
    fn recall_examples() {
        assert_eq!(recall_at_1(&["a", "b"], &["a", "b"]).unwrap(), 100.0);
        assert_eq!(recall_at_1(&["x", "y"], &["a", "b"]).unwrap(), 0.0);
        assert_eq!(recall_at_1(&["a", "b", "c", "x"], &["a", "b", "c", "d"]).unwrap(), 75.0);
        assert!(matches!(recall_at_1(&["a"], &["a", "b"]), Err(HarnessError::LengthMismatch { .. })));
    }

    #[test]
    fn exact_match_examples() {
        assert_eq!(exact_match(&["Melatonin "], &[vec!["melatonin"]]).unwrap(), 100.0);
        assert_eq!(exact_match(&["rem"], &[vec!["rem sleep"]]).unwrap(), 0.0);
        assert_eq!(exact_match(&["a", "b"], &[vec!["x", "a"], vec!["c"]]).unwrap(), 50.0);
    }

    #[test]
    fn summarize_examples() {
        assert_eq!(summarize_scores(&[47.2, 45.8, 47.4, 46.6, 48.4]).unwrap(), (47.1, 1.0));
        assert_eq!(summarize_scores(&[5.0]).unwrap(), (5.0, 0.0));
        assert_eq!(summarize_scores(&[1.0, 3.0]).unwrap(), (2.0, 1.4));
        assert_eq!(summarize_scores(&[]), Err(HarnessError::Empty));
    }

    #[test]
    fn ledger_classification() {
        let mut l = ScoreLedger::new(EvalMode::Retrieval, "baseline", 25.0, 0.0, None);
        l.record("bt-ca", Family::Backtranslation, 33.3, 0.0, 0.0, None);
        let r = l.row("bt-ca").unwrap();
        assert_eq!(r.delta, Some(8.3));
        assert_eq!(r.outcome, Outcome::Improved);
        let mut l = ScoreLedger::new(EvalMode::Retrieval, "baseline", 46.8, 0.0, None);
        l.record("bt", Family::Backtranslation, 45.8, 0.0, 0.0, None);
        assert_eq!(l.row("bt").unwrap().outcome, Outcome::Worse);
        l.record("eq", Family::Negatives, 46.8, 0.0, 0.0, None);
        assert_eq!(l.row("eq").unwrap().outcome, Outcome::Equal);
    }

    #[test]
    fn ledger_rejects_bad_baselines() {
        let l = ScoreLedger::new(EvalMode::Reader, "b", 1.0, 0.0, None);
        let mut rows = l.rows().to_vec();
        assert_eq!(ScoreLedger::from_rows(EvalMode::Reader, vec![]), Err(HarnessError::NoBaseline));
        rows.push(rows[0].clone());
        assert_eq!(ScoreLedger::from_rows(EvalMode::Reader, rows), Err(HarnessError::DuplicateBaseline));
    }

    #[test]
    fn plan_examples() {
        let mut l = ScoreLedger::new(EvalMode::Reader, "baseline", 50.0, 0.0, None);
        l.record("para", Family::Paraphrase, 52.1, 0.0, 0.0, None);
        l.record("para2", Family::Paraphrase, 51.0, 0.0, 0.0, None);
        l.record("translate", Family::Backtranslation, 52.1, 0.0, 0.0, None);
        l.record("subst", Family::Substitution, 51.1, 0.0, 0.0, None);
        l.record("neg", Family::Negatives, 49.7, 0.0, 0.0, None);
        assert_eq!(plan_continual(&l, true), ["para", "translate", "subst"]);
        assert_eq!(plan_continual(&l, false), ["para", "translate", "subst", "para2"]);
        let mut worse = ScoreLedger::new(EvalMode::Reader, "baseline", 50.0, 0.0, None);
        worse.record("x", Family::Paraphrase, 50.0, 0.0, 0.0, None);
        assert!(plan_continual(&worse, true).is_empty());
    }

    #[test]
    fn individual_suite_with_stub() {
        let test = test_set(1000);
        let mut table = BTreeMap::new();
        table.insert("baseline".to_string(), 25.0);
        table.insert("bt-ca".to_string(), 33.3);
        table.insert("para".to_string(), 24.1);
        let mut trainer = StubTrainer::new(20.0, table);
        trainer.failing.insert("broken".into());
        let original = variant("baseline", Method::Original);
        let variants = [
            variant("bt-ca", Method::Backtranslation),
            variant("para", Method::Paraphrase),
            variant("broken", Method::Substitution),
        ];
        let base = trainer.base.clone();
        let ledger = run_individual_suite(
            &base,
            &original,
            &variants,
            &mut trainer,
            &test,
            EvalMode::Retrieval,
            &Hyperparams::retrieval(),
        )
        .unwrap();
        assert_eq!(ledger.baseline_metric(), 25.0);
        assert_eq!(ledger.row("bt-ca").unwrap().metric, Some(33.3));
        assert_eq!(ledger.row("bt-ca").unwrap().delta, Some(8.3));
        assert_eq!(ledger.row("para").unwrap().outcome, Outcome::Worse);
        assert_eq!(ledger.row("broken").unwrap().outcome, Outcome::Failed);
    }

    #[test]
    fn continual_chain_adds_stage_steps() {
        let mut table = BTreeMap::new();
        table.insert("a".to_string(), 51.0);
        let mut trainer = StubTrainer::new(50.0, table);
        trainer.chain_step = 1.0;
        let variants = [
            variant("a", Method::Paraphrase),
            variant("b", Method::Substitution),
            variant("c", Method::Backtranslation),
        ];
        let plan: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let base = trainer.base.clone();
        let out = run_continual(
            &plan,
            &variants,
            &base,
            &mut trainer,
            &Hyperparams::continual(EvalMode::Reader),
            &test_set(100),
            EvalMode::Reader,
        )
        .unwrap();
        assert_eq!(out.metric, 53.0);
        assert_eq!(out.stages.len(), 3);
        let err =
            run_continual(&[], &variants, &base, &mut trainer, &Hyperparams::reader(), &test_set(1), EvalMode::Reader);
        assert_eq!(err, Err(HarnessError::NoImprovingSets));
        let mut ledger = ScoreLedger::new(EvalMode::Reader, "baseline", 50.9, 0.0, None);
        ledger.record_continual(&err);
        assert_eq!(ledger.row("continual").unwrap().outcome, Outcome::NotApplicable);
    }

    #[test]
    fn checkpoints_are_portable() {
        let mut t = StubTrainer::new(40.0, BTreeMap::new());
        let base = t.base.clone();
        let (c, _) = t.fine_tune(&base, &variant("a", Method::Paraphrase), &Hyperparams::reader()).unwrap();
        let fresh = StubTrainer::new(40.0, BTreeMap::new());
        assert!(fresh.score_of(&c).is_some());
        assert_eq!(fresh.score_of(&c), t.score_of(&c));
        assert_eq!(fresh.score_of(&Checkpoint("nope".into())), None);
    }

    #[test]
    fn concat_sums_sizes() {
        let a = variant("a", Method::Paraphrase);
        let b = variant("b", Method::Substitution);
        let c = concat_augmented(&[&a, &b]).unwrap();
        assert_eq!(c.labels.len(), 6);
        assert_eq!(c.method, Method::AugmentationConcat);
        assert_eq!(c.labels[..3], a.labels[..]);
        assert_eq!(concat_augmented(&[]), Err(HarnessError::NoImprovingSets));
    }

    #[test]
    fn relative_change_cells() {
        assert_eq!(relative_change(25.0, 33.3), Some((33, Outcome::Improved)));
        assert_eq!(relative_change(42.5, 62.8), Some((48, Outcome::Improved)));
        assert_eq!(relative_change(46.8, 48.4), Some((3, Outcome::Improved)));
        assert_eq!(relative_change(46.8, 45.8), Some((2, Outcome::Worse)));
        assert_eq!(relative_change(0.0, 1.0), None);
    }

    #[test]
    fn cost_rows_sum_family_hours() {
        let mut l = ScoreLedger::new(EvalMode::Retrieval, "baseline", 25.0, 720.0, None);
        l.record("n1", Family::Negatives, 31.2, 1800.0, 10.0, None);
        l.record("n3", Family::Negatives, 32.3, 1440.0, 10.0, None);
        l.record("continual", Family::Continual, 29.2, 5760.0, 0.0, None);
        let rows = cost_benefit(&l);
        assert_eq!(rows.len(), 3);
        assert_eq!((rows[0].family, rows[0].hours), (Family::Baseline, 0.2));
        assert_eq!((rows[1].hours, rows[1].relative_pct), (0.9, Some(29)));
        assert!(rows[2].stage_only);
        assert_eq!(rows[2].relative_pct, Some(17));
    }
}
