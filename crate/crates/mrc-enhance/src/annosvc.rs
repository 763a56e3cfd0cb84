//! HTTP service for the answer-shortening review workflow.
//!
//! State lives in a [`ReviewQueue`] rebuilt at startup by replaying an
//! append-only JSON-lines event log. Mutations are serialized through one
//! writer: the queue is updated and the resulting event appended before the
//! response is sent. Reads take a shared lock.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use anyhow::{Context, Result};
use axum::extract::{Path as UrlPath, Query, Request, State};
use axum::http::{HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use mrc_enhance_core::augment::Method;
use mrc_enhance_core::review::{AnnotationEvent, ReviewError, ReviewQueue, ReviewTask, TaskStatus};
use mrc_enhance_core::QALabel;

use crate::backends::now_iso;
use crate::formats::{manifest_path, write_json, write_labels, VariantManifest};

pub const TOKEN_HEADER: &str = "x-annotation-token";

#[derive(Debug, Clone)]
pub struct ServiceOptions {
    pub log_path: PathBuf,
    pub threshold_words: usize,
    pub token: Option<String>,
    /// Exports are written below this directory.
    pub export_dir: PathBuf,
}

pub struct AnnotationService {
    queue: RwLock<ReviewQueue>,
    log: Mutex<File>,
    options: ServiceOptions,
}

pub fn read_event_log(path: &Path) -> Result<Vec<AnnotationEvent>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}: invalid event", path.display(), i + 1))?);
    }
    Ok(out)
}

impl AnnotationService {
    /// Replay the event log over `labels`, then enqueue any newly flagged
    /// labels (re-enqueueing is idempotent).
    pub fn open(labels: Vec<QALabel>, options: ServiceOptions) -> Result<Self> {
        let events = read_event_log(&options.log_path)?;
        let mut queue =
            ReviewQueue::replay(labels, events).with_context(|| format!("replaying {}", options.log_path.display()))?;
        if let Some(parent) = options.log_path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let mut log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&options.log_path)
            .with_context(|| format!("opening {}", options.log_path.display()))?;
        let created = queue.enqueue(options.threshold_words, &now_iso()).map_err(|e| anyhow::anyhow!("{e}"))?;
        for ev in &created {
            append(&mut log, ev)?;
        }
        tracing::info!(tasks = queue.stats().total, new = created.len(), "annotation queue ready");
        Ok(Self { queue: RwLock::new(queue), log: Mutex::new(log), options })
    }

    pub fn snapshot(&self) -> ReviewQueue {
        self.queue.read().expect("queue lock").clone()
    }

    fn mutate(
        &self,
        f: impl FnOnce(&mut ReviewQueue, &str) -> Result<(ReviewTask, AnnotationEvent), ReviewError>,
    ) -> Result<ReviewTask, ApiError> {
        let mut log = self.log.lock().expect("log lock");
        let (task, event) = {
            let mut q = self.queue.write().expect("queue lock");
            f(&mut q, &now_iso())?
        };
        append(&mut log, &event).map_err(|e| ApiError::Internal(format!("{e:#}")))?;
        Ok(task)
    }

    pub fn submit_revision(&self, task_id: &str, answer: &str) -> Result<ReviewTask, ApiError> {
        self.mutate(|q, ts| q.submit_revision(task_id, answer, ts))
    }

    pub fn skip(&self, task_id: &str) -> Result<ReviewTask, ApiError> {
        self.mutate(|q, ts| q.skip(task_id, ts))
    }

    pub fn reopen(&self, task_id: &str) -> Result<ReviewTask, ApiError> {
        self.mutate(|q, ts| q.reopen(task_id, ts))
    }

    fn export_path(&self, requested: &str) -> Result<PathBuf, ApiError> {
        let rel = Path::new(requested);
        let ok = !requested.is_empty() && rel.components().all(|c| matches!(c, Component::Normal(_)));
        if !ok {
            return Err(ApiError::BadRequest(format!(
                "output_path must be a relative path inside the export directory: {requested:?}"
            )));
        }
        Ok(self.options.export_dir.join(rel))
    }

    pub fn export(&self, requested: &str) -> Result<ExportResult, ApiError> {
        let path = self.export_path(requested)?;
        let q = self.queue.read().expect("queue lock");
        let labels = q.export();
        write_labels(&path, &labels).map_err(|e| ApiError::Internal(format!("{e:#}")))?;
        let manifest = VariantManifest {
            method: Method::AnswerShortening.as_str().into(),
            backend: "manual".into(),
            set: None,
            pivot: None,
            seed: 0,
            seconds: 0.0,
            avg_similarity: None,
            warnings: 0,
        };
        write_json(&manifest_path(&path), &manifest).map_err(|e| ApiError::Internal(format!("{e:#}")))?;
        Ok(ExportResult { output_path: path.display().to_string(), labels: labels.len(), revised: q.stats().revised })
    }
}

fn append(log: &mut File, ev: &AnnotationEvent) -> Result<()> {
    let mut line = serde_json::to_vec(ev)?;
    line.push(b'\n');
    log.write_all(&line)?;
    log.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct ExportResult {
    pub output_path: String,
    pub labels: usize,
    pub revised: usize,
}

#[derive(Debug)]
pub enum ApiError {
    Review(ReviewError),
    BadRequest(String),
    Unauthorized,
    Internal(String),
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        Self::Review(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            Self::Review(ReviewError::UnknownTask(id)) => {
                (StatusCode::NOT_FOUND, json!({"error": "unknown_task", "task_id": id}))
            }
            Self::Review(ReviewError::Invalid(reason)) => {
                (StatusCode::UNPROCESSABLE_ENTITY, json!({"error": "invalid_revision", "reason": reason.as_str()}))
            }
            Self::Review(ReviewError::Conflict { task_id, status }) => {
                (StatusCode::CONFLICT, json!({"error": "conflict", "task_id": task_id, "status": status.as_str()}))
            }
            Self::BadRequest(msg) => {
                (StatusCode::UNPROCESSABLE_ENTITY, json!({"error": "invalid_request", "message": msg}))
            }
            Self::Unauthorized => (StatusCode::UNAUTHORIZED, json!({"error": "unauthorized"})),
            Self::Internal(msg) => {
                tracing::error!(%msg, "annotation service failure");
                (StatusCode::INTERNAL_SERVER_ERROR, json!({"error": "internal", "message": msg}))
            }
        };
        (status, Json(body)).into_response()
    }
}

type Shared = Arc<AnnotationService>;

#[derive(Debug, Deserialize)]
struct ListQuery {
    status: Option<String>,
    limit: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct RevisionBody {
    answer: String,
}

#[derive(Debug, Deserialize)]
struct ExportBody {
    output_path: String,
}

async fn list_tasks(State(svc): State<Shared>, Query(q): Query<ListQuery>) -> Result<Json<Vec<ReviewTask>>, ApiError> {
    let status = match q.status.as_deref().filter(|s| !s.is_empty()) {
        Some(s) => Some(TaskStatus::parse(s).ok_or_else(|| ApiError::BadRequest(format!("unknown status {s:?}")))?),
        None => None,
    };
    let queue = svc.queue.read().expect("queue lock");
    Ok(Json(queue.list(status, q.limit).into_iter().cloned().collect()))
}

async fn next_task(State(svc): State<Shared>) -> Response {
    let queue = svc.queue.read().expect("queue lock");
    match queue.next_task() {
        Some(t) => Json(t.clone()).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn get_task(State(svc): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Json<ReviewTask>, ApiError> {
    let queue = svc.queue.read().expect("queue lock");
    queue.task(&id).cloned().map(Json).ok_or(ApiError::Review(ReviewError::UnknownTask(id)))
}

async fn revise(
    State(svc): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<RevisionBody>,
) -> Result<Json<ReviewTask>, ApiError> {
    svc.submit_revision(&id, &body.answer).map(Json)
}

async fn skip(State(svc): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Json<ReviewTask>, ApiError> {
    svc.skip(&id).map(Json)
}

async fn reopen(State(svc): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Json<ReviewTask>, ApiError> {
    svc.reopen(&id).map(Json)
}

async fn stats(State(svc): State<Shared>) -> Json<mrc_enhance_core::review::ReviewStats> {
    Json(svc.queue.read().expect("queue lock").stats())
}

async fn export(State(svc): State<Shared>, Json(body): Json<ExportBody>) -> Result<Json<ExportResult>, ApiError> {
    svc.export(&body.output_path).map(Json)
}

async fn require_token(State(svc): State<Shared>, headers: HeaderMap, req: Request, next: Next) -> Response {
    if let Some(token) = &svc.options.token {
        let given = headers.get(TOKEN_HEADER).and_then(|v| v.to_str().ok());
        if given != Some(token.as_str()) {
            return ApiError::Unauthorized.into_response();
        }
    }
    next.run(req).await
}

pub fn router(service: Arc<AnnotationService>) -> Router {
    Router::new()
        .route("/api/tasks", get(list_tasks))
        .route("/api/tasks/next", get(next_task))
        .route("/api/tasks/{id}", get(get_task))
        .route("/api/tasks/{id}/revision", post(revise))
        .route("/api/tasks/{id}/skip", post(skip))
        .route("/api/tasks/{id}/reopen", post(reopen))
        .route("/api/stats", get(stats))
        .route("/api/export", post(export))
        .layer(middleware::from_fn_with_state(service.clone(), require_token))
        .with_state(service)
}

/// Serve until interrupted.
pub async fn serve(service: Arc<AnnotationService>, addr: SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    tracing::info!(addr = %listener.local_addr()?, "annotation service listening");
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
