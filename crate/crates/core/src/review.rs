//! Answer-shortening review queue.
//!
//! The queue owns a dataset, the review tasks derived from it, and an
//! append-only event log. Every accepted mutation appends exactly one event,
//! and [`ReviewQueue::replay`] rebuilds identical state from that log.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{flag_long_answers, CorpusError, QALabel};
use crate::text::{normalize, word_count};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    Revised,
    Skipped,
}

impl TaskStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pending => "pending",
            Self::Revised => "revised",
            Self::Skipped => "skipped",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pending" => Some(Self::Pending),
            "revised" => Some(Self::Revised),
            "skipped" => Some(Self::Skipped),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewTask {
    pub id: String,
    pub label_id: String,
    pub question: String,
    pub original_answer: String,
    pub context: String,
    pub status: TaskStatus,
    pub revised_answer: Option<String>,
    pub updated_at: String,
}

impl ReviewTask {
    /// A pending task for the label's first answer. `updated_at` is left
    /// empty until the task is enqueued.
    pub fn for_label(label: &QALabel) -> Self {
        Self {
            id: format!("t-{}", label.id),
            label_id: label.id.clone(),
            question: label.question.clone(),
            original_answer: label.answers.first().cloned().unwrap_or_default(),
            context: label.positive_ctx.text.clone(),
            status: TaskStatus::Pending,
            revised_answer: None,
            updated_at: String::new(),
        }
    }

    pub fn original_words(&self) -> usize {
        word_count(&self.original_answer)
    }

    /// Check a proposed shortened answer against this task.
    pub fn check_revision(&self, shortened: &str) -> Result<(), RevisionRejection> {
        let norm = normalize(shortened);
        if norm.is_empty() {
            return Err(RevisionRejection::Empty);
        }
        if !normalize(&self.context).contains(&norm) {
            return Err(RevisionRejection::NotSubstring);
        }
        if word_count(&norm) > self.original_words() {
            return Err(RevisionRejection::LongerThanOriginal);
        }
        Ok(())
    }
}

/// Reasons a revision is refused as unprocessable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevisionRejection {
    NotSubstring,
    Empty,
    LongerThanOriginal,
}

impl RevisionRejection {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::NotSubstring => "not_substring",
            Self::Empty => "empty",
            Self::LongerThanOriginal => "longer_than_original",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReviewError {
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("invalid revision: {}", .0.as_str())]
    Invalid(RevisionRejection),
    #[error("task {task_id} is {}", .status.as_str())]
    Conflict { task_id: String, status: TaskStatus },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Created,
    Revised,
    Skipped,
    Reopened,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Created => "created",
            Self::Revised => "revised",
            Self::Skipped => "skipped",
            Self::Reopened => "reopened",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "created" => Some(Self::Created),
            "revised" => Some(Self::Revised),
            "skipped" => Some(Self::Skipped),
            "reopened" => Some(Self::Reopened),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EventPayload {
    Created { label_id: String, question: String, original_answer: String, context: String },
    Revised { answer: String },
    Empty {},
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationEvent {
    pub seq: u64,
    pub task_id: String,
    pub kind: EventKind,
    pub payload: EventPayload,
    pub ts: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error("event {seq}: sequence not increasing")]
    OutOfOrder { seq: u64 },
    #[error("event {seq}: payload does not match kind {kind}")]
    BadPayload { seq: u64, kind: &'static str },
    #[error("event {seq}: {source}")]
    Rejected { seq: u64, source: ReviewError },
    #[error("event {seq}: task {task_id} created twice")]
    Duplicate { seq: u64, task_id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewStats {
    pub total: usize,
    pub pending: usize,
    pub revised: usize,
    pub skipped: usize,
    pub mean_len_before: Option<f64>,
    pub mean_len_after: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReviewQueue {
    labels: Vec<QALabel>,
    tasks: BTreeMap<String, ReviewTask>,
    by_label: BTreeMap<String, String>,
    events: Vec<AnnotationEvent>,
}

impl ReviewQueue {
    pub fn new(labels: Vec<QALabel>) -> Self {
        Self { labels, tasks: BTreeMap::new(), by_label: BTreeMap::new(), events: Vec::new() }
    }

    /// Rebuild a queue by re-applying a recorded event log. Revisions are
    /// re-validated on the way in.
    pub fn replay(
        labels: Vec<QALabel>,
        events: impl IntoIterator<Item = AnnotationEvent>,
    ) -> Result<Self, ReplayError> {
        let mut q = Self::new(labels);
        for ev in events {
            q.apply(ev)?;
        }
        Ok(q)
    }

    fn apply(&mut self, ev: AnnotationEvent) -> Result<(), ReplayError> {
        let seq = ev.seq;
        if self.events.last().is_some_and(|last| last.seq >= seq) {
            return Err(ReplayError::OutOfOrder { seq });
        }
        let bad = || ReplayError::BadPayload { seq, kind: ev.kind.as_str() };
        let rejected = |source| ReplayError::Rejected { seq, source };
        match (ev.kind, &ev.payload) {
            (EventKind::Created, EventPayload::Created { label_id, question, original_answer, context }) => {
                if self.tasks.contains_key(&ev.task_id) || self.by_label.contains_key(label_id) {
                    return Err(ReplayError::Duplicate { seq, task_id: ev.task_id.clone() });
                }
                let task = ReviewTask {
                    id: ev.task_id.clone(),
                    label_id: label_id.clone(),
                    question: question.clone(),
                    original_answer: original_answer.clone(),
                    context: context.clone(),
                    status: TaskStatus::Pending,
                    revised_answer: None,
                    updated_at: ev.ts.clone(),
                };
                self.by_label.insert(label_id.clone(), task.id.clone());
                self.tasks.insert(task.id.clone(), task);
            }
            (EventKind::Revised, EventPayload::Revised { answer }) => {
                self.transition_revise(&ev.task_id, answer, &ev.ts).map_err(rejected)?;
            }
            (EventKind::Skipped, EventPayload::Empty {}) => {
                self.transition(&ev.task_id, &ev.ts, TaskStatus::Skipped).map_err(rejected)?;
            }
            (EventKind::Reopened, EventPayload::Empty {}) => {
                self.transition(&ev.task_id, &ev.ts, TaskStatus::Pending).map_err(rejected)?;
            }
            _ => return Err(bad()),
        }
        self.events.push(ev);
        Ok(())
    }

    fn next_seq(&self) -> u64 {
        self.events.last().map_or(1, |e| e.seq + 1)
    }

    fn record(&mut self, task_id: &str, kind: EventKind, payload: EventPayload, ts: &str) -> AnnotationEvent {
        let ev = AnnotationEvent { seq: self.next_seq(), task_id: task_id.into(), kind, payload, ts: ts.into() };
        self.events.push(ev.clone());
        ev
    }

    /// Create tasks for every label whose first answer exceeds
    /// `threshold_words`, skipping labels that already have a task.
    pub fn enqueue(&mut self, threshold_words: usize, ts: &str) -> Result<Vec<AnnotationEvent>, CorpusError> {
        let flagged = flag_long_answers(&self.labels, threshold_words)?;
        let mut created = Vec::new();
        for mut task in flagged {
            if self.by_label.contains_key(&task.label_id) || self.tasks.contains_key(&task.id) {
                continue;
            }
            task.updated_at = ts.into();
            let payload = EventPayload::Created {
                label_id: task.label_id.clone(),
                question: task.question.clone(),
                original_answer: task.original_answer.clone(),
                context: task.context.clone(),
            };
            self.by_label.insert(task.label_id.clone(), task.id.clone());
            let id = task.id.clone();
            self.tasks.insert(id.clone(), task);
            created.push(self.record(&id, EventKind::Created, payload, ts));
        }
        Ok(created)
    }

    fn transition_revise(&mut self, task_id: &str, answer: &str, ts: &str) -> Result<(), ReviewError> {
        let task = self.tasks.get_mut(task_id).ok_or_else(|| ReviewError::UnknownTask(task_id.into()))?;
        if task.status == TaskStatus::Revised {
            return Err(ReviewError::Conflict { task_id: task_id.into(), status: task.status });
        }
        task.check_revision(answer).map_err(ReviewError::Invalid)?;
        task.status = TaskStatus::Revised;
        task.revised_answer = Some(answer.into());
        task.updated_at = ts.into();
        Ok(())
    }

    fn transition(&mut self, task_id: &str, ts: &str, to: TaskStatus) -> Result<(), ReviewError> {
        let task = self.tasks.get_mut(task_id).ok_or_else(|| ReviewError::UnknownTask(task_id.into()))?;
        let allowed = match to {
            TaskStatus::Skipped => task.status == TaskStatus::Pending,
            TaskStatus::Pending => task.status != TaskStatus::Pending,
            TaskStatus::Revised => false,
        };
        if !allowed {
            return Err(ReviewError::Conflict { task_id: task_id.into(), status: task.status });
        }
        task.status = to;
        task.revised_answer = None;
        task.updated_at = ts.into();
        Ok(())
    }

    /// Accept a shortened answer for a pending or skipped task.
    pub fn submit_revision(
        &mut self,
        task_id: &str,
        shortened: &str,
        ts: &str,
    ) -> Result<(ReviewTask, AnnotationEvent), ReviewError> {
        let answer = shortened.trim();
        self.transition_revise(task_id, answer, ts)?;
        let ev = self.record(task_id, EventKind::Revised, EventPayload::Revised { answer: answer.into() }, ts);
        Ok((self.tasks[task_id].clone(), ev))
    }

    pub fn skip(&mut self, task_id: &str, ts: &str) -> Result<(ReviewTask, AnnotationEvent), ReviewError> {
        self.transition(task_id, ts, TaskStatus::Skipped)?;
        let ev = self.record(task_id, EventKind::Skipped, EventPayload::Empty {}, ts);
        Ok((self.tasks[task_id].clone(), ev))
    }

    /// Return a revised or skipped task to the pending queue.
    pub fn reopen(&mut self, task_id: &str, ts: &str) -> Result<(ReviewTask, AnnotationEvent), ReviewError> {
        self.transition(task_id, ts, TaskStatus::Pending)?;
        let ev = self.record(task_id, EventKind::Reopened, EventPayload::Empty {}, ts);
        Ok((self.tasks[task_id].clone(), ev))
    }

    pub fn task(&self, task_id: &str) -> Option<&ReviewTask> {
        self.tasks.get(task_id)
    }

    /// Tasks in review order (longest original answer first, ties by label
    /// id), optionally filtered by status.
    pub fn list(&self, status: Option<TaskStatus>, limit: Option<usize>) -> Vec<&ReviewTask> {
        let mut out: Vec<&ReviewTask> = self.tasks.values().filter(|t| status.is_none_or(|s| t.status == s)).collect();
        out.sort_by(|a, b| b.original_words().cmp(&a.original_words()).then_with(|| a.label_id.cmp(&b.label_id)));
        if let Some(limit) = limit {
            out.truncate(limit);
        }
        out
    }

    pub fn next_task(&self) -> Option<&ReviewTask> {
        self.list(Some(TaskStatus::Pending), Some(1)).into_iter().next()
    }

    pub fn events(&self) -> &[AnnotationEvent] {
        &self.events
    }

    pub fn labels(&self) -> &[QALabel] {
        &self.labels
    }

    /// Task counts plus mean first-answer length over the whole dataset,
    /// before and after applying revisions.
    pub fn stats(&self) -> ReviewStats {
        let mut s = ReviewStats {
            total: self.tasks.len(),
            pending: 0,
            revised: 0,
            skipped: 0,
            mean_len_before: None,
            mean_len_after: None,
        };
        for t in self.tasks.values() {
            match t.status {
                TaskStatus::Pending => s.pending += 1,
                TaskStatus::Revised => s.revised += 1,
                TaskStatus::Skipped => s.skipped += 1,
            }
        }
        if !self.labels.is_empty() {
            let n = self.labels.len() as f64;
            let before: usize = self.labels.iter().map(QALabel::first_answer_words).sum();
            let after: usize = self.exported_lengths().sum();
            s.mean_len_before = Some(before as f64 / n);
            s.mean_len_after = Some(after as f64 / n);
        }
        s
    }

    fn revision_for(&self, label_id: &str) -> Option<&str> {
        let task = self.tasks.get(self.by_label.get(label_id)?)?;
        task.revised_answer.as_deref()
    }

    fn exported_lengths(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels.iter().map(|l| match self.revision_for(&l.id) {
            Some(r) => word_count(r),
            None => l.first_answer_words(),
        })
    }

    /// The dataset with each revised answer substituted for its label's
    /// first answer. Unrevised labels pass through unchanged.
    pub fn export(&self) -> Vec<QALabel> {
        self.labels
            .iter()
            .map(|l| {
                let mut l = l.clone();
                if let Some(r) = self.revision_for(&l.id) {
                    match l.answers.first_mut() {
                        Some(first) => *first = r.into(),
                        None => l.answers.push(r.into()),
                    }
                }
                l
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Passage;
    use alloc::string::ToString;
    use alloc::vec;

    fn words(prefix: &str, n: usize) -> String {
        (0..n).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>().join(" ")
    }

    fn label(id: &str, answer: &str, ctx: &str) -> QALabel {
        QALabel {
            id: id.into(),
            question: "what?".into(),
            answers: vec![answer.into()],
            positive_ctx: Passage::new(format!("p{id}"), "", ctx),
            negative_ctxs: vec![],
        }
    }

    fn queue() -> ReviewQueue {
        let long = format!("melatonin regulates the sleep cycle {}", words("x", 26));
        let ctx = format!("before {long} after");
        let mid = words("y", 45);
        ReviewQueue::new(vec![
            label("a", &long, &ctx),
            label("b", &mid, &mid),
            label("c", &words("z", 10), &words("z", 10)),
        ])
    }

    #[test]
    fn enqueue_is_idempotent() {
        let mut q = queue();
        assert_eq!(q.enqueue(30, "t0").unwrap().len(), 2);
        assert_eq!(q.enqueue(30, "t1").unwrap().len(), 0);
        assert_eq!(q.enqueue(5, "t2").unwrap().len(), 1);
    }

    #[test]
    fn next_task_longest_first() {
        let mut q = queue();
        assert!(q.next_task().is_none());
        q.enqueue(30, "t0").unwrap();
        assert_eq!(q.next_task().unwrap().label_id, "b");
        q.submit_revision("t-b", "y0 y1", "t1").unwrap();
        assert_eq!(q.next_task().unwrap().label_id, "a");
    }

    #[test]
    fn revision_validation() {
        let mut q = queue();
        q.enqueue(30, "t0").unwrap();
        let err = |q: &mut ReviewQueue, a: &str| q.submit_revision("t-a", a, "t").unwrap_err();
        assert_eq!(err(&mut q, ""), ReviewError::Invalid(RevisionRejection::Empty));
        assert_eq!(err(&mut q, "  \t"), ReviewError::Invalid(RevisionRejection::Empty));
        assert_eq!(err(&mut q, "insomnia"), ReviewError::Invalid(RevisionRejection::NotSubstring));
        let longer = format!("before {}", q.task("t-a").unwrap().original_answer);
        assert_eq!(err(&mut q, &longer), ReviewError::Invalid(RevisionRejection::LongerThanOriginal));
        assert!(matches!(q.submit_revision("nope", "x", "t"), Err(ReviewError::UnknownTask(_))));
        let (task, ev) = q.submit_revision("t-a", "Melatonin regulates the  sleep cycle", "t9").unwrap();
        assert_eq!(task.status, TaskStatus::Revised);
        assert_eq!(ev.kind, EventKind::Revised);
        assert!(matches!(err(&mut q, "melatonin"), ReviewError::Conflict { .. }));
    }

    #[test]
    fn skip_then_revise_then_reopen() {
        let mut q = queue();
        q.enqueue(30, "t0").unwrap();
        q.skip("t-a", "t1").unwrap();
        assert!(matches!(q.skip("t-a", "t2"), Err(ReviewError::Conflict { .. })));
        q.submit_revision("t-a", "melatonin", "t3").unwrap();
        q.reopen("t-a", "t4").unwrap();
        assert_eq!(q.task("t-a").unwrap().status, TaskStatus::Pending);
        assert!(q.task("t-a").unwrap().revised_answer.is_none());
        assert!(matches!(q.reopen("t-a", "t5"), Err(ReviewError::Conflict { .. })));
    }

    #[test]
    fn stats_track_revisions() {
        let l31 = label("a", &words("w", 31), &words("w", 40));
        let l5 = label("b", &words("w", 5), &words("w", 40));
        let mut q = ReviewQueue::new(vec![l31, l5]);
        q.enqueue(30, "t0").unwrap();
        let s = q.stats();
        assert_eq!(s.mean_len_before, Some(18.0));
        assert_eq!(s.mean_len_after, Some(18.0));
        q.submit_revision("t-a", "w0 w1 w2 w3 w4", "t1").unwrap();
        let s = q.stats();
        assert_eq!(s.mean_len_after, Some(5.0));
        assert_eq!(s.total, s.pending + s.revised + s.skipped);
    }

    #[test]
    fn replay_reconstructs_state() {
        let mut q = queue();
        q.enqueue(30, "t0").unwrap();
        q.skip("t-b", "t1").unwrap();
        q.submit_revision("t-a", "melatonin regulates", "t2").unwrap();
        let rebuilt = ReviewQueue::replay(q.labels().to_vec(), q.events().to_vec()).unwrap();
        assert_eq!(rebuilt, q);
    }

    #[test]
    fn replay_rejects_invalid_revision() {
        let mut q = queue();
        q.enqueue(30, "t0").unwrap();
        let mut events = q.events().to_vec();
        events.push(AnnotationEvent {
            seq: 99,
            task_id: "t-a".into(),
            kind: EventKind::Revised,
            payload: EventPayload::Revised { answer: "not there".to_string() },
            ts: "t".into(),
        });
        assert!(matches!(ReviewQueue::replay(q.labels().to_vec(), events), Err(ReplayError::Rejected { seq: 99, .. })));
    }

    #[test]
    fn export_substitutes_first_answer() {
        let mut q = queue();
        assert_eq!(q.export(), q.labels());
        q.enqueue(30, "t0").unwrap();
        q.submit_revision("t-a", "melatonin regulates the sleep cycle", "t1").unwrap();
        let out = q.export();
        let changed: Vec<_> = out.iter().zip(q.labels()).filter(|(a, b)| a != b).collect();
        assert_eq!(changed.len(), 1);
        assert_eq!(changed[0].0.answers[0], "melatonin regulates the sleep cycle");
    }
}
