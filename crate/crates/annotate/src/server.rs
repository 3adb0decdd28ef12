//! HTTP front end.
//!
//! ```text
//! GET  /tasks/next?annotator=ID        -> task view, or 204 when nothing is left
//! POST /tasks/{id}/class {"annotator", "guess"}
//! POST /tasks/{id}/label {"annotator", "label"}
//! GET  /export                         -> ground-truth JSONL
//! ```
//!
//! Every accepted submission is appended to `events.jsonl` in the data
//! directory before the response is sent, and `dataset.jsonl` is rewritten
//! after each label.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::Mutex;
use serde::Deserialize;

use crate::pool::PoolItem;
use crate::workflow::{ApiError, Event, Workflow};

pub const EVENT_LOG: &str = "events.jsonl";
pub const DATASET: &str = "dataset.jsonl";

struct Inner {
    workflow: Workflow,
    log: Option<File>,
    data_dir: Option<PathBuf>,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Mutex<Inner>>,
    started: Instant,
}

impl AppState {
    /// In-memory state; nothing is persisted.
    pub fn ephemeral(workflow: Workflow) -> Self {
        AppState {
            inner: Arc::new(Mutex::new(Inner {
                workflow,
                log: None,
                data_dir: None,
            })),
            started: Instant::now(),
        }
    }

    /// State persisted under `data_dir`, resuming from an existing event log.
    pub fn open(pool: Vec<PoolItem>, lease_ms: u64, data_dir: &Path) -> wordtrust::Result<Self> {
        std::fs::create_dir_all(data_dir)
            .map_err(|e| wordtrust::Error::Data(format!("{}: {e}", data_dir.display())))?;
        let log_path = data_dir.join(EVENT_LOG);
        let events = read_events(&log_path)?;
        let workflow = Workflow::replay(pool, lease_ms, &events)
            .map_err(|e| wordtrust::Error::Data(format!("{}: {e}", log_path.display())))?;
        log::info!("resumed {} events from {}", events.len(), log_path.display());
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| wordtrust::Error::Data(format!("{}: {e}", log_path.display())))?;
        Ok(AppState {
            inner: Arc::new(Mutex::new(Inner {
                workflow,
                log: Some(log),
                data_dir: Some(data_dir.to_path_buf()),
            })),
            started: Instant::now(),
        })
    }

    fn now(&self) -> u64 {
        self.started.elapsed().as_millis() as u64
    }

    pub fn dataset(&self) -> Vec<wordtrust::evalgt::GroundTruthRecord> {
        self.inner.lock().workflow.dataset()
    }
}

pub fn read_events(path: &Path) -> wordtrust::Result<Vec<Event>> {
    let Ok(file) = File::open(path) else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| wordtrust::Error::Data(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| wordtrust::Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

impl Inner {
    fn persist(&mut self, event: &Event) -> Result<(), ApiError> {
        if let Some(log) = &mut self.log {
            let line = serde_json::to_string(event).expect("events serialize");
            writeln!(log, "{line}")
                .and_then(|_| log.flush())
                .map_err(|e| ApiError::Invalid(format!("cannot persist event: {e}")))?;
        }
        if let (Event::Label { .. }, Some(dir)) = (event, &self.data_dir) {
            let data = export_jsonl(&self.workflow);
            if let Err(e) = std::fs::write(dir.join(DATASET), data) {
                log::error!("cannot write dataset snapshot: {e}");
            }
        }
        Ok(())
    }
}

fn export_jsonl(workflow: &Workflow) -> String {
    workflow
        .dataset()
        .iter()
        .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
        .collect()
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
        };
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

#[derive(Deserialize)]
struct NextQuery {
    annotator: String,
}

#[derive(Deserialize)]
struct ClassBody {
    annotator: String,
    guess: String,
}

#[derive(Deserialize)]
struct LabelBody {
    annotator: String,
    label: String,
}

async fn next_task(State(state): State<AppState>, Query(q): Query<NextQuery>) -> Response {
    let now = state.now();
    match state.inner.lock().workflow.next_task(&q.annotator, now) {
        Some(view) => Json(view).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn submit_class(
    State(state): State<AppState>,
    UrlPath(task): UrlPath<String>,
    Json(body): Json<ClassBody>,
) -> Result<Response, ApiError> {
    let now = state.now();
    let mut inner = state.inner.lock();
    let (response, event) = inner.workflow.submit_class(&body.annotator, &task, &body.guess, now)?;
    inner.persist(&event)?;
    Ok(Json(response).into_response())
}

async fn submit_label(
    State(state): State<AppState>,
    UrlPath(task): UrlPath<String>,
    Json(body): Json<LabelBody>,
) -> Result<Response, ApiError> {
    let now = state.now();
    let mut inner = state.inner.lock();
    let event = inner.workflow.submit_label(&body.annotator, &task, &body.label, now)?;
    inner.persist(&event)?;
    let resolution = inner.workflow.resolution(&task).expect("task exists");
    Ok(Json(serde_json::json!({ "status": "ok", "resolution": resolution.to_string() })).into_response())
}

async fn export(State(state): State<AppState>) -> Response {
    let body = export_jsonl(&state.inner.lock().workflow);
    ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/tasks/next", get(next_task))
        .route("/tasks/{id}/class", post(submit_class))
        .route("/tasks/{id}/label", post(submit_label))
        .route("/export", get(export))
        .with_state(state)
}

pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("annotation service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
