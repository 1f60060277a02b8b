//! HTTP JSON API. Every body is an object with an `ok` flag; failures are
//! `{"ok": false, "error": "..."}` with a 4xx status (5xx for storage failures).

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use crate::model::{Hit, HitOption, HitStatus, SpanRef, TurnView};
use crate::project::{Project, ProjectError};
use crate::workflow::{ProjectState, WorkflowError};

pub type Shared = Arc<Mutex<Project>>;

/// What an annotator sees: the HIT, its dialogue, and how many responses it has, but
/// not what others selected.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HitView {
    pub id: String,
    pub stage: u8,
    pub conversation: String,
    pub turns: Vec<TurnView>,
    pub focus: Option<SpanRef>,
    pub focus_text: Option<String>,
    pub options: Vec<HitOption>,
    pub required_responses: usize,
    pub response_count: usize,
    pub status: HitStatus,
}

impl HitView {
    pub fn new(hit: &Hit, state: &ProjectState) -> Self {
        let turns = state.conversations[&hit.conversation].record.turns.clone();
        let focus_text = hit.focus.and_then(|f| turns.get(f.turn).map(|t| t.tokens[f.start..f.end].join(" ")));
        HitView {
            id: hit.id.clone(),
            stage: hit.stage,
            conversation: hit.conversation.clone(),
            turns,
            focus: hit.focus,
            focus_text,
            options: hit.options.clone(),
            required_responses: hit.required_responses,
            response_count: hit.responses.len(),
            status: hit.status.clone(),
        }
    }
}

pub struct ApiError(StatusCode, String);

impl ApiError {
    fn bad_request(msg: impl Into<String>) -> Self {
        ApiError(StatusCode::BAD_REQUEST, msg.into())
    }
}

impl From<ProjectError> for ApiError {
    fn from(e: ProjectError) -> Self {
        let status = match &e {
            ProjectError::Workflow(w) => match w {
                WorkflowError::UnknownHit(_) => StatusCode::NOT_FOUND,
                WorkflowError::Closed(_)
                | WorkflowError::DuplicateAnnotator { .. }
                | WorkflowError::AlreadyInitialized
                | WorkflowError::NotInitialized => StatusCode::CONFLICT,
                WorkflowError::UnknownOption { .. } | WorkflowError::BadRequest(_) => StatusCode::BAD_REQUEST,
            },
            ProjectError::Core(c) if !c.is_io() => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl From<WorkflowError> for ApiError {
    fn from(e: WorkflowError) -> Self {
        ProjectError::from(e).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({"ok": false, "error": self.1}))).into_response()
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

fn lock(shared: &Shared) -> MutexGuard<'_, Project> {
    // a panic while holding the lock cannot leave the state half-applied: apply runs
    // only after validation, so the data behind a poisoned lock is still consistent
    shared.lock().unwrap_or_else(|p| p.into_inner())
}

async fn stats(State(shared): State<Shared>) -> ApiResult {
    let stats = lock(&shared).stats()?;
    Ok(Json(json!({"ok": true, "stats": stats})))
}

async fn next_hit(State(shared): State<Shared>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    let annotator = q.get("annotator").map(|a| a.trim()).filter(|a| !a.is_empty());
    let annotator = annotator.ok_or_else(|| ApiError::bad_request("missing query parameter 'annotator'"))?;
    let stage = match q.get("stage").map(|s| s.trim()).filter(|s| !s.is_empty()) {
        None => None,
        Some(s) => match s.parse::<u8>() {
            Ok(n @ 1..=3) => Some(n),
            _ => return Err(ApiError::bad_request(format!("stage must be 1, 2 or 3, got {s:?}"))),
        },
    };
    let project = lock(&shared);
    let state = project.state();
    let hit = state.next_hit(annotator, stage).map(|h| HitView::new(h, state));
    Ok(Json(json!({"ok": true, "hit": hit})))
}

async fn get_hit(State(shared): State<Shared>, Path(id): Path<String>) -> ApiResult {
    let project = lock(&shared);
    let state = project.state();
    let hit = state.hit(&id).ok_or(WorkflowError::UnknownHit(id))?;
    Ok(Json(json!({"ok": true, "hit": HitView::new(hit, state)})))
}

#[derive(Deserialize)]
struct Submission {
    annotator: String,
    selection: Vec<String>,
}

async fn submit(State(shared): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let sub: Submission =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))?;
    let mut project = lock(&shared);
    project.submit(&id, &sub.annotator, sub.selection)?;
    let state = project.state();
    let hit = state.hit(&id).expect("submitted HIT exists");
    Ok(Json(json!({"ok": true, "hit": HitView::new(hit, state)})))
}

async fn export(State(shared): State<Shared>) -> ApiResult {
    let (path, stats) = lock(&shared).export()?;
    Ok(Json(json!({"ok": true, "path": path, "stats": stats})))
}

async fn not_found() -> ApiError {
    ApiError(StatusCode::NOT_FOUND, "no such endpoint".into())
}

/// The API router; when `static_dir` is given, other paths are served from it.
pub fn router(shared: Shared, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/project/stats", get(stats))
        .route("/api/project/export", post(export))
        .route("/api/hits/next", get(next_hit))
        .route("/api/hits/{id}", get(get_hit))
        .route("/api/hits/{id}/response", post(submit))
        .with_state(shared);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(not_found),
    }
}

pub async fn serve(project: Project, addr: SocketAddr, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(Arc::new(Mutex::new(project)), static_dir)).await
}
