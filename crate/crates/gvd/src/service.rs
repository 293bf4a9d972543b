//! HTTP sessions for the pin-and-resolve loop.
//!
//! Each session keeps its instance, options and accumulated constraints.
//! Every constraint change re-runs the whole pipeline, so a result depends
//! only on the instance, the options and the current constraint set.
//! Requests on one session are serialized by a per-session lock; solves run
//! on the blocking pool.

use std::collections::BTreeMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path as FsPath, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gvd_core::pipeline::Approach;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Mutex;
use tower_http::cors::CorsLayer;

use crate::io::{parse_json, to_json, FormatError, InstanceFile, LoadedInstance, Membership, ResultFile, Summary};
use crate::run::{self, resolve_constraints, RunError, RunOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HistoryEntry {
    pub version: usize,
    pub request: Value,
    pub summary: Summary,
}

#[derive(Debug)]
pub struct Session {
    pub id: u64,
    pub instance_file: InstanceFile,
    pub loaded: Arc<LoadedInstance>,
    pub approach: Approach,
    /// Pins and exclusions here are the accumulated constraint set.
    pub options: RunOptions,
    pub history: Vec<HistoryEntry>,
    pub result: ResultFile,
    result_json: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Snapshot {
    id: u64,
    instance: InstanceFile,
    approach: String,
    options: RunOptions,
    history: Vec<HistoryEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CreateSession {
    #[serde(alias = "instanceFile")]
    pub instance: InstanceFile,
    pub approach: String,
    #[serde(default)]
    pub options: RunOptions,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClearScope {
    All,
    Pins,
    Exclusions,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClearItem {
    Scope(ClearScope),
    /// Removes this pair from both pins and exclusions.
    Pair(Membership),
}

/// Clears apply first, then pins, then exclusions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintRequest {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pin: Vec<Membership>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exclude: Vec<Membership>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clear: Vec<ClearItem>,
}

impl ConstraintRequest {
    /// The options after applying this request to `options`.
    pub fn apply(&self, options: &RunOptions) -> RunOptions {
        let mut next = options.clone();
        for c in &self.clear {
            match c {
                ClearItem::Scope(ClearScope::All) => {
                    next.pins.clear();
                    next.exclusions.clear();
                }
                ClearItem::Scope(ClearScope::Pins) => next.pins.clear(),
                ClearItem::Scope(ClearScope::Exclusions) => next.exclusions.clear(),
                ClearItem::Pair(p) => {
                    next.pins.retain(|x| x != p);
                    next.exclusions.retain(|x| x != p);
                }
            }
        }
        for p in &self.pin {
            if !next.pins.contains(p) {
                next.pins.push(p.clone());
            }
        }
        for p in &self.exclude {
            if !next.exclusions.contains(p) {
                next.exclusions.push(p.clone());
            }
        }
        next
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn not_found(what: &str) -> Self {
        ApiError {
            status: StatusCode::NOT_FOUND,
            body: json!({"error": "not-found", "message": format!("no such {what}")}),
        }
    }

    fn bad_request(message: String) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            body: json!({"error": "validation", "message": message, "problems": [message]}),
        }
    }
}

impl From<RunError> for ApiError {
    fn from(e: RunError) -> Self {
        let (status, kind) = match &e {
            RunError::Format(_) => (StatusCode::BAD_REQUEST, "validation"),
            RunError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            RunError::Unprocessable(_) => (StatusCode::UNPROCESSABLE_ENTITY, "infeasible"),
            RunError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        let problems = match &e {
            RunError::Format(f) => f.problems(),
            other => vec![other.to_string()],
        };
        ApiError {
            status,
            body: json!({"error": kind, "message": e.to_string(), "problems": problems}),
        }
    }
}

impl From<FormatError> for ApiError {
    fn from(e: FormatError) -> Self {
        RunError::Format(e).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

fn json_bytes(text: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], text).into_response()
}

#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<RwLock<BTreeMap<u64, Arc<Mutex<Session>>>>>,
    /// Last id handed out.
    last_id: Arc<AtomicU64>,
    state_dir: Option<PathBuf>,
}

async fn compute(loaded: Arc<LoadedInstance>, approach: Approach, options: RunOptions) -> Result<ResultFile, RunError> {
    tokio::task::spawn_blocking(move || run::run_pipeline(&loaded, approach, &options))
        .await
        .unwrap_or_else(|e| Err(RunError::Internal(gvd_core::Error::Numerical(format!("solver task failed: {e}")))))
}

impl AppState {
    pub fn new() -> Self {
        AppState::default()
    }

    /// Sessions are written to `dir` after every change and restored from it.
    pub fn with_state_dir(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(AppState {
            state_dir: Some(dir),
            ..AppState::default()
        })
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        let id: u64 = id.parse().map_err(|_| ApiError::not_found("session"))?;
        self.sessions
            .read()
            .expect("session table lock")
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session"))
    }

    fn insert(&self, session: Session) {
        let id = session.id;
        self.last_id.fetch_max(id, Ordering::SeqCst);
        self.sessions
            .write()
            .expect("session table lock")
            .insert(id, Arc::new(Mutex::new(session)));
    }

    fn persist(&self, s: &Session) -> std::io::Result<()> {
        let Some(dir) = &self.state_dir else {
            return Ok(());
        };
        let snap = Snapshot {
            id: s.id,
            instance: s.instance_file.clone(),
            approach: s.approach.name().to_string(),
            options: s.options.clone(),
            history: s.history.clone(),
        };
        let path = dir.join(format!("session-{}.json", s.id));
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, to_json(&snap))?;
        fs::rename(tmp, path)
    }

    /// Re-creates the sessions found in the state directory. Results are
    /// recomputed, which reproduces them exactly.
    pub async fn restore(&self) -> anyhow::Result<usize> {
        let Some(dir) = self.state_dir.clone() else {
            return Ok(0);
        };
        let mut count = 0;
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| is_snapshot(p))
            .collect();
        paths.sort();
        for path in paths {
            let text = fs::read_to_string(&path)?;
            let snap: Snapshot = parse_json(&text, &path.display().to_string())?;
            let loaded = Arc::new(LoadedInstance::from_file(snap.instance.clone(), "snapshot")?);
            let approach: Approach = snap.approach.parse()?;
            let result = compute(loaded.clone(), approach, snap.options.clone()).await?;
            self.insert(Session {
                id: snap.id,
                instance_file: snap.instance,
                loaded,
                approach,
                options: snap.options,
                history: snap.history,
                result_json: to_json(&result),
                result,
            });
            count += 1;
        }
        Ok(count)
    }
}

fn is_snapshot(p: &FsPath) -> bool {
    p.extension().is_some_and(|e| e == "json")
        && p.file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with("session-"))
}

async fn health() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

async fn list_sessions(State(state): State<AppState>) -> Json<Value> {
    let sessions: Vec<Arc<Mutex<Session>>> = state.sessions.read().expect("session table lock").values().cloned().collect();
    let mut out = Vec::with_capacity(sessions.len());
    for s in sessions {
        let s = s.lock().await;
        out.push(json!({"sessionId": s.id, "approach": s.approach.name(), "version": s.history.len()}));
    }
    Json(json!({"sessions": out}))
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let text = std::str::from_utf8(&body).map_err(|e| ApiError::bad_request(format!("body is not UTF-8: {e}")))?;
    let req: CreateSession = parse_json(text, "request")?;
    let approach: Approach = req
        .approach
        .parse()
        .map_err(|e: gvd_core::Error| ApiError::bad_request(e.to_string()))?;
    let loaded = Arc::new(LoadedInstance::from_file(req.instance.clone(), "instance")?);
    resolve_constraints(&loaded, &req.options)?;
    let result = compute(loaded.clone(), approach, req.options.clone()).await?;
    let id = state.last_id.fetch_add(1, Ordering::SeqCst) + 1;
    let result_json = to_json(&result);
    let session = Session {
        id,
        instance_file: req.instance,
        loaded,
        approach,
        history: vec![HistoryEntry {
            version: 1,
            request: json!({"approach": approach.name(), "options": req.options}),
            summary: result.summary.clone(),
        }],
        options: req.options,
        result,
        result_json,
    };
    state.persist(&session).map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        body: json!({"error": "internal", "message": format!("snapshot failed: {e}")}),
    })?;
    let body = json!({"sessionId": id, "result": &session.result});
    state.insert(session);
    Ok(json_bytes(to_json(&body)))
}

async fn post_constraints(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let session = state.session(&id)?;
    let text = std::str::from_utf8(&body).map_err(|e| ApiError::bad_request(format!("body is not UTF-8: {e}")))?;
    let req: ConstraintRequest = parse_json(text, "request")?;
    let mut s = session.lock().await;
    let options = req.apply(&s.options);
    resolve_constraints(&s.loaded, &options)?;
    // on failure the session keeps its previous constraints and result
    let result = compute(s.loaded.clone(), s.approach, options.clone()).await?;
    let version = s.history.len() + 1;
    s.history.push(HistoryEntry {
        version,
        request: serde_json::to_value(&req).expect("plain data serializes"),
        summary: result.summary.clone(),
    });
    s.options = options;
    s.result_json = to_json(&result);
    s.result = result;
    state.persist(&s).map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        body: json!({"error": "internal", "message": format!("snapshot failed: {e}")}),
    })?;
    Ok(json_bytes(s.result_json.clone()))
}

#[derive(Debug, Deserialize)]
struct ResultQuery {
    include: Option<String>,
}

async fn get_result(State(state): State<AppState>, Path(id): Path<String>, Query(q): Query<ResultQuery>) -> Result<Response, ApiError> {
    let session = state.session(&id)?;
    let s = session.lock().await;
    let Some(include) = q.include else {
        return Ok(json_bytes(s.result_json.clone()));
    };
    let mut out = serde_json::Map::new();
    for part in include.split([',', '|']).map(str::trim).filter(|p| !p.is_empty()) {
        let value = match part {
            "summary" => serde_json::to_value(&s.result.summary),
            "assignments" => serde_json::to_value(&s.result.assignments),
            "cells" => serde_json::to_value(run::cells(&s.loaded, &s.result)?),
            other => {
                return Err(ApiError::bad_request(format!(
                    "unknown include {other:?}; use cells, summary or assignments"
                )))
            }
        }
        .expect("plain data serializes");
        out.insert(part.to_string(), value);
    }
    Ok(json_bytes(to_json(&out)))
}

async fn get_diagnostics(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let session = state.session(&id)?;
    let s = session.lock().await;
    let report = run::diagnostics(&s.loaded, &s.result)?;
    Ok(json_bytes(to_json(&report)))
}

async fn get_history(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let session = state.session(&id)?;
    let s = session.lock().await;
    Ok(json_bytes(to_json(&json!({"sessionId": s.id, "history": s.history}))))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}/constraints", post(post_constraints))
        .route("/sessions/{id}/result", get(get_result))
        .route("/sessions/{id}/diagnostics", get(get_diagnostics))
        .route("/sessions/{id}/history", get(get_history))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serves on `0.0.0.0:port` until interrupted.
pub async fn serve(port: u16, state_dir: Option<PathBuf>) -> anyhow::Result<()> {
    let state = match state_dir {
        Some(dir) => {
            let state = AppState::with_state_dir(dir)?;
            let n = state.restore().await?;
            if n > 0 {
                eprintln!("restored {n} session(s)");
            }
            state
        }
        None => AppState::new(),
    };
    let addr = SocketAddr::from(([0, 0, 0, 0], port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
