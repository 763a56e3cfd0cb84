//! Report artifacts: cross-method ROUGE-1 matrices, answer-length reports,
//! and result tables. Everything here is a pure function of its inputs.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::augment::TrainingSetVariant;
use crate::corpus::{LengthHistogram, QALabel};
use crate::harness::{cost_benefit, EvalMode, Family, Outcome, ScoreLedger};
use crate::simscore::{avg_pairwise_rouge1, SimError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalysisError {
    #[error("at least two methods are required")]
    TooFewMethods,
    #[error("question lists for {method} have {found} entries, expected {expected}")]
    Misaligned { method: String, found: usize, expected: usize },
    #[error("no questions")]
    Empty,
    #[error("label {0} missing from the other split")]
    IdMismatch(String),
    #[error("split sizes differ ({before} vs {after})")]
    SizeMismatch { before: usize, after: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Markdown,
    Csv,
}

/// Index-aligned question lists per method, in display order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodQuestionSets {
    methods: Vec<(String, Vec<String>)>,
}

impl MethodQuestionSets {
    pub fn new(methods: Vec<(String, Vec<String>)>) -> Result<Self, AnalysisError> {
        if methods.len() < 2 {
            return Err(AnalysisError::TooFewMethods);
        }
        let expected = methods[0].1.len();
        if expected == 0 {
            return Err(AnalysisError::Empty);
        }
        if let Some((name, qs)) = methods.iter().find(|(_, qs)| qs.len() != expected) {
            return Err(AnalysisError::Misaligned { method: name.clone(), found: qs.len(), expected });
        }
        Ok(Self { methods })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.methods.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.methods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.methods.is_empty()
    }
}

/// Symmetric matrix of average ROUGE-1 scores in [0, 100].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub names: Vec<String>,
    pub cells: Vec<Vec<f64>>,
}

#[allow(clippy::needless_range_loop)] // symmetric fill reads clearer with indices
pub fn method_similarity_matrix(sets: &MethodQuestionSets) -> Result<SimilarityMatrix, AnalysisError> {
    let n = sets.methods.len();
    let mut cells = alloc::vec![alloc::vec![100.0; n]; n];
    for i in 0..n {
        for j in 0..i {
            let v = avg_pairwise_rouge1(&sets.methods[i].1, &sets.methods[j].1).map_err(|e| match e {
                SimError::Empty => AnalysisError::Empty,
                SimError::LengthMismatch { left, right } => {
                    AnalysisError::Misaligned { method: sets.methods[i].0.clone(), found: left, expected: right }
                }
            })?;
            cells[i][j] = v;
            cells[j][i] = v;
        }
    }
    Ok(SimilarityMatrix { names: sets.names().map(String::from).collect(), cells })
}

impl SimilarityMatrix {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.cells[a][b]
    }

    /// Full square matrix with 2-decimal cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method");
        for n in &self.names {
            let _ = write!(out, ",{}", csv_field(n));
        }
        out.push('\n');
        for (name, row) in self.names.iter().zip(&self.cells) {
            out.push_str(&csv_field(name));
            for v in row {
                let _ = write!(out, ",{v:.2}");
            }
            out.push('\n');
        }
        out
    }

    /// Lower-triangular Markdown table with 2-decimal cells.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| |");
        for n in &self.names {
            let _ = write!(out, " {n} |");
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(self.names.len()));
        out.push('\n');
        for (i, name) in self.names.iter().enumerate() {
            let _ = write!(out, "| {name} |");
            for j in 0..self.names.len() {
                if j <= i {
                    let _ = write!(out, " {:.2} |", self.cells[i][j]);
                } else {
                    out.push_str("  |");
                }
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

// ---------------------------------------------------------------------------
// Answer lengths

/// First-answer word counts before and after shortening.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthReport {
    pub before: LengthHistogram,
    pub after: LengthHistogram,
}

/// Pair labels by id; `after` may be in any order but must hold exactly the
/// same ids as `before`.
pub fn length_report(before: &[QALabel], after: &[QALabel]) -> Result<LengthReport, AnalysisError> {
    if before.len() != after.len() {
        return Err(AnalysisError::SizeMismatch { before: before.len(), after: after.len() });
    }
    let after_by_id: BTreeMap<&str, &QALabel> = after.iter().map(|l| (l.id.as_str(), l)).collect();
    let mut lb = Vec::with_capacity(before.len());
    let mut la = Vec::with_capacity(before.len());
    for l in before {
        let a = after_by_id.get(l.id.as_str()).ok_or_else(|| AnalysisError::IdMismatch(l.id.clone()))?;
        lb.push(l.first_answer_words());
        la.push(a.first_answer_words());
    }
    if after_by_id.len() != before.len() {
        let extra =
            after.iter().find(|l| !before.iter().any(|b| b.id == l.id)).map(|l| l.id.clone()).unwrap_or_default();
        return Err(AnalysisError::IdMismatch(extra));
    }
    Ok(LengthReport { before: LengthHistogram::from_lengths(&lb), after: LengthHistogram::from_lengths(&la) })
}

impl LengthReport {
    pub fn mean_before(&self) -> Option<f64> {
        self.before.mean()
    }

    pub fn mean_after(&self) -> Option<f64> {
        self.after.mean()
    }

    fn span(&self) -> core::ops::RangeInclusive<usize> {
        let lo = self.before.first.min(self.after.first);
        lo..=self.before.max_len().max(self.after.max_len())
    }

    /// `words,before,after` rows over the full length range.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("words,before,after\n");
        if self.before.counts.is_empty() {
            return out;
        }
        for w in self.span() {
            let _ = writeln!(out, "{w},{},{}", self.before.get(w), self.after.get(w));
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let fmt = |m: Option<f64>| m.map_or_else(|| "n/a".to_string(), |m| format!("{m:.2}"));
        let mut out = format!(
            "Mean answer length: {} words before, {} words after.\n\n| words | before | after |\n|---:|---:|---:|\n",
            fmt(self.mean_before()),
            fmt(self.mean_after())
        );
        if self.before.counts.is_empty() {
            return out;
        }
        for w in self.span() {
            let (b, a) = (self.before.get(w), self.after.get(w));
            if b + a > 0 {
                let _ = writeln!(out, "| {w} | {b} | {a} |");
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Result tables

#[derive(Debug, Clone, PartialEq)]
enum Cell {
    Score { value: f64, outcome: Outcome },
    Failed,
    Missing,
}

fn family_cell(ledger: &ScoreLedger, family: Family) -> Cell {
    if let Some(row) = ledger.best_of(family) {
        return Cell::Score { value: row.metric.unwrap_or(0.0), outcome: row.outcome };
    }
    let rows: Vec<_> = ledger.rows().iter().filter(|r| r.family == family).collect();
    if rows.iter().any(|r| r.outcome == Outcome::Failed) {
        Cell::Failed
    } else {
        Cell::Missing
    }
}

fn present_families(ledgers: &[(&str, &ScoreLedger)]) -> Vec<Family> {
    Family::ALL.into_iter().filter(|f| ledgers.iter().any(|(_, l)| l.rows().iter().any(|r| r.family == *f))).collect()
}

fn marker(outcome: Outcome) -> &'static str {
    match outcome {
        Outcome::Improved => " +",
        Outcome::Worse => " -",
        _ => "",
    }
}

/// Result table with one row per method family present in any ledger and
/// one column per dataset. Each cell holds the family's best score; the
/// best cell of each column is bold, improvements carry `+` and declines
/// `-`. Families absent from a dataset render as `N/A`.
pub fn render_results_table(ledgers: &[(&str, &ScoreLedger)], mode: EvalMode, format: TableFormat) -> String {
    let families = present_families(ledgers);
    let grid: Vec<Vec<Cell>> =
        families.iter().map(|&f| ledgers.iter().map(|(_, l)| family_cell(l, f)).collect()).collect();
    let best: Vec<Option<f64>> = (0..ledgers.len())
        .map(|c| {
            grid.iter()
                .filter_map(|row| match row[c] {
                    Cell::Score { value, .. } => Some(value),
                    _ => None,
                })
                .reduce(f64::max)
        })
        .collect();
    match format {
        TableFormat::Markdown => {
            let mut out =
                format!("Results of fine-tuned {} models ({}).\n\n| Methods |", mode.as_str(), mode.metric_name());
            for (name, _) in ledgers {
                let _ = write!(out, " {name} |");
            }
            out.push_str("\n|---|");
            out.push_str(&"---:|".repeat(ledgers.len()));
            out.push('\n');
            for (family, row) in families.iter().zip(&grid) {
                let _ = write!(out, "| {} |", family.title());
                for (c, cell) in row.iter().enumerate() {
                    let text = match cell {
                        Cell::Score { value, outcome } => {
                            let v = format!("{value:.1}");
                            let v = if best[c] == Some(*value) { format!("**{v}**") } else { v };
                            format!("{v}{}", marker(*outcome))
                        }
                        Cell::Failed => "FAILED".into(),
                        Cell::Missing => "N/A".into(),
                    };
                    let _ = write!(out, " {text} |");
                }
                out.push('\n');
            }
            out
        }
        TableFormat::Csv => {
            let mut out = String::from("method");
            for (name, _) in ledgers {
                let _ = write!(out, ",{0},{0}_class,{0}_best", csv_field(name));
            }
            out.push('\n');
            for (family, row) in families.iter().zip(&grid) {
                out.push_str(family.as_str());
                for (c, cell) in row.iter().enumerate() {
                    match cell {
                        Cell::Score { value, outcome } => {
                            let _ = write!(out, ",{value:.1},{},{}", outcome.as_str(), best[c] == Some(*value));
                        }
                        Cell::Failed => out.push_str(",FAILED,failed,false"),
                        Cell::Missing => out.push_str(",N/A,n/a,false"),
                    }
                }
                out.push('\n');
            }
            out
        }
    }
}

/// Cost table: fine-tuning hours per family with the relative change of the
/// family's best score, e.g. `4.9 (33%) +`.
pub fn render_cost_table(ledgers: &[(&str, &ScoreLedger)], mode: EvalMode, format: TableFormat) -> String {
    let families = present_families(ledgers);
    let per_dataset: Vec<Vec<crate::harness::CostRow>> = ledgers.iter().map(|(_, l)| cost_benefit(l)).collect();
    let cell = |c: usize, family: Family| -> (String, &'static str) {
        match per_dataset[c].iter().find(|r| r.family == family) {
            None => ("N/A".into(), "n/a"),
            Some(r) => match (r.family, r.relative_pct, r.outcome) {
                (Family::Baseline, _, _) => (format!("{:.1}", r.hours), "baseline"),
                (_, Some(p), o) => (format!("{:.1} ({p}%){}", r.hours, marker(o)), o.as_str()),
                (_, None, Outcome::Failed) => ("FAILED".into(), "failed"),
                (_, None, Outcome::NotApplicable) => ("N/A".into(), "n/a"),
                (_, None, o) => (format!("{:.1}", r.hours), o.as_str()),
            },
        }
    };
    match format {
        TableFormat::Markdown => {
            let mut out = format!(
                "Total time spent (in hours) vs. maximum relative {} improvements of {} fine-tuning.\n\n| Methods |",
                mode.metric_name(),
                mode.as_str()
            );
            for (name, _) in ledgers {
                let _ = write!(out, " {name} |");
            }
            out.push_str("\n|---|");
            out.push_str(&"---:|".repeat(ledgers.len()));
            out.push('\n');
            for &family in &families {
                let _ = write!(out, "| {} |", family.title());
                for c in 0..ledgers.len() {
                    let _ = write!(out, " {} |", cell(c, family).0);
                }
                out.push('\n');
            }
            if families.iter().any(|f| matches!(f, Family::Continual | Family::Augmentation)) {
                out.push_str(
                    "\nContinual and augmentation rows show only their own fine-tuning time; \
                     the total also includes every row above them.\n",
                );
            }
            out
        }
        TableFormat::Csv => {
            let mut out = String::from("method");
            for (name, _) in ledgers {
                let _ = write!(out, ",{0}_hours,{0}_relative_pct,{0}_class", csv_field(name));
            }
            out.push('\n');
            for &family in &families {
                out.push_str(family.as_str());
                for (c, rows) in per_dataset.iter().enumerate() {
                    match rows.iter().find(|r| r.family == family) {
                        Some(r) => {
                            let pct = r.relative_pct.map(|p| p.to_string()).unwrap_or_default();
                            let _ = write!(out, ",{:.1},{pct},{}", r.hours, cell(c, family).1);
                        }
                        None => out.push_str(",,,n/a"),
                    }
                }
                out.push('\n');
            }
            out
        }
    }
}

/// Average similarity index per ranked set, one column per dataset.
pub fn render_similarity_index_table(datasets: &[(&str, &[TrainingSetVariant])], format: TableFormat) -> String {
    let mut ids: Vec<String> = Vec::new();
    for (_, sets) in datasets {
        for s in sets.iter().filter(|s| s.avg_similarity.is_some()) {
            let key = set_label(s);
            if !ids.contains(&key) {
                ids.push(key);
            }
        }
    }
    let lookup = |sets: &[TrainingSetVariant], key: &str| -> Option<f64> {
        sets.iter().find(|s| set_label(s) == key).and_then(|s| s.avg_similarity)
    };
    let mut out = String::new();
    match format {
        TableFormat::Markdown => {
            out.push_str("| set |");
            for (name, _) in datasets {
                let _ = write!(out, " {name} |");
            }
            out.push_str("\n|---|");
            out.push_str(&"---:|".repeat(datasets.len()));
            out.push('\n');
            for key in &ids {
                let _ = write!(out, "| {key} |");
                for (_, sets) in datasets {
                    match lookup(sets, key) {
                        Some(v) => {
                            let _ = write!(out, " {v:.2} |");
                        }
                        None => out.push_str(" N/A |"),
                    }
                }
                out.push('\n');
            }
        }
        TableFormat::Csv => {
            out.push_str("set");
            for (name, _) in datasets {
                let _ = write!(out, ",{}", csv_field(name));
            }
            out.push('\n');
            for key in &ids {
                out.push_str(&csv_field(key));
                for (_, sets) in datasets {
                    match lookup(sets, key) {
                        Some(v) => {
                            let _ = write!(out, ",{v:.2}");
                        }
                        None => out.push(','),
                    }
                }
                out.push('\n');
            }
        }
    }
    out
}

fn set_label(s: &TrainingSetVariant) -> String {
    match (&s.params.backend, s.params.set) {
        (Some(b), Some(n)) if !b.is_empty() => format!("{b} set{n}"),
        (_, Some(n)) => format!("set{n}"),
        _ => s.id.clone(),
    }
}
