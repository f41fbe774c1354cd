//! HTTP API driven by the operator console.
//!
//! | method | path | body |
//! |---|---|---|
//! | GET  | `/api/health` | |
//! | POST | `/api/sessions` | optional `{"load": [path, ...]}` |
//! | GET  | `/api/sessions/{id}` | |
//! | POST | `/api/sessions/{id}/turns` | `{"query": text}` |
//! | GET  | `/api/sessions/{id}/audit?offset=&limit=` | |
//! | POST | `/api/sessions/{id}/approvals` | `{"decision": "approve"\|"override"\|"reject", "turn"?: n, "note"?: text}` |
//! | GET  | `/api/evidence/{triple_id}` | |
//!
//! Errors are `{"error": code, "message": text}`; validation errors add
//! `"fields"`. A second turn posted while one is running gets 409.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Map, Value};
use tokio::sync::Mutex;

use crate::engine::{verdict_summary, Engine, TurnOutcome, TurnStatus};
use crate::kg::TripleStore;
use crate::session::{ApprovalKind, ResourceKind, SessionState, StateEvent};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    fields: Vec<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into(), fields: vec![] }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not-found", format!("unknown {what} {id:?}"))
    }

    fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    fn validation(fields: Vec<String>) -> Self {
        Self {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            code: "validation",
            message: format!("invalid or missing field(s): {}", fields.join(", ")),
            fields,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({"error": self.code, "message": self.message});
        if !self.fields.is_empty() {
            body["fields"] = json!(self.fields);
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Clone, Copy)]
enum Field {
    Str,
    OptStr,
    OptUint,
    OptStrList,
}

/// Parse a JSON object body, collecting every bad field before failing.
fn object_body(bytes: &Bytes, fields: &[(&str, Field)]) -> ApiResult<Map<String, Value>> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        let required: Vec<String> =
            fields.iter().filter(|(_, f)| matches!(f, Field::Str)).map(|(n, _)| n.to_string()).collect();
        return if required.is_empty() { Ok(Map::new()) } else { Err(ApiError::validation(required)) };
    }
    let v: Value = serde_json::from_slice(bytes).map_err(|_| ApiError::validation(vec!["body".into()]))?;
    let Value::Object(map) = v else { return Err(ApiError::validation(vec!["body".into()])) };
    let mut bad = Vec::new();
    for (name, kind) in fields {
        let ok = match (kind, map.get(*name)) {
            (Field::Str, Some(Value::String(s))) => !s.trim().is_empty(),
            (Field::Str, _) => false,
            (_, None | Some(Value::Null)) => true,
            (Field::OptStr, Some(v)) => v.is_string(),
            (Field::OptUint, Some(v)) => v.is_u64(),
            (Field::OptStrList, Some(Value::Array(a))) => a.iter().all(Value::is_string),
            (Field::OptStrList, Some(_)) => false,
        };
        if !ok {
            bad.push(name.to_string());
        }
    }
    if bad.is_empty() { Ok(map) } else { Err(ApiError::validation(bad)) }
}

struct TurnRecord {
    outcome: TurnOutcome,
    human_signal: bool,
}

struct SessionData {
    state: SessionState,
    turns: Vec<TurnRecord>,
}

pub struct AppState {
    engine: Arc<Engine>,
    sessions: RwLock<HashMap<String, Arc<Mutex<SessionData>>>>,
    next_id: AtomicU64,
    audit_dir: Option<PathBuf>,
    /// Loaded into every new session.
    autoload: Vec<String>,
}

impl AppState {
    pub fn new(engine: Engine, audit_dir: Option<PathBuf>, autoload: Vec<String>) -> Arc<Self> {
        Arc::new(Self {
            engine: Arc::new(engine),
            sessions: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
            audit_dir,
            autoload,
        })
    }

    fn session(&self, id: &str) -> ApiResult<Arc<Mutex<SessionData>>> {
        self.sessions.read().expect("session map").get(id).cloned().ok_or_else(|| ApiError::not_found("session", id))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(|| async { Json(json!({"status": "ok"})) }))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(session_info))
        .route("/api/sessions/{id}/turns", post(post_turn))
        .route("/api/sessions/{id}/audit", get(audit_page))
        .route("/api/sessions/{id}/approvals", post(post_approval))
        .route("/api/evidence/{triple_id}", get(evidence))
        .with_state(state)
}

async fn create_session(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    let map = object_body(&body, &[("load", Field::OptStrList)])?;
    let extra: Vec<String> = map
        .get("load")
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(|v| v.as_str().map(str::to_string)).collect())
        .unwrap_or_default();
    let id = format!("s-{:04}", app.next_id.fetch_add(1, Ordering::Relaxed));
    let budget = app.engine.config.critic.budget;
    let app2 = app.clone();
    let id2 = id.clone();
    let data = tokio::task::spawn_blocking(move || -> ApiResult<SessionData> {
        let mut state = match &app2.audit_dir {
            Some(dir) => SessionState::persistent(&id2, budget, dir.join(&id2)).map_err(|e| ApiError::internal(e.to_string()))?,
            None => SessionState::new(&id2, budget),
        };
        state
            .apply(StateEvent::Annotated { label: "session-created".into(), detail: json!({"session_id": id2}) })
            .map_err(|e| ApiError::internal(e.to_string()))?;
        for p in app2.autoload.iter().chain(&extra) {
            app2.engine
                .load_resource(&mut state, p, None, None)
                .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "load-failed", e.to_string()))?;
        }
        Ok(SessionData { state, turns: vec![] })
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    let resources: Vec<String> = data.state.resources().keys().cloned().collect();
    let audit_len = data.state.audit().len();
    app.sessions.write().expect("session map").insert(id.clone(), Arc::new(Mutex::new(data)));
    Ok((StatusCode::CREATED, Json(json!({"session_id": id, "resources": resources, "audit_len": audit_len}))))
}

async fn session_info(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let slot = app.session(&id)?;
    let d = slot.lock().await;
    Ok(Json(json!({
        "session_id": id,
        "resources": d.state.resources().iter().map(|(k, h)| json!({"name": k, "kind": h.kind, "uri": h.uri, "checksum": h.checksum})).collect::<Vec<_>>(),
        "turns": d.turns.len(),
        "audit_len": d.state.audit().len(),
        "critic_count": d.state.critic_count(),
    })))
}

/// The structured turn response.
pub fn turn_json(session_id: &str, turn: usize, out: &TurnOutcome) -> Value {
    let recommendation = out.candidate.as_ref().map(|c| {
        json!({
            "origin": c.origin,
            "narrative": c.narrative,
            "table": out.table(),
            "quantities": c.quantities,
            "provenance": c.provenance,
            "evidence_ids": c.evidence_ids,
            "claims": c.claims,
            "offsets": c.proposed_offsets,
        })
    });
    json!({
        "session_id": session_id,
        "turn": turn,
        "status": out.status,
        "verdict": out.verdict.as_ref().map(verdict_summary),
        "routing": out.routing,
        "recommendation": recommendation,
        "escalation": out.escalation,
        "loaded": out.loaded,
        "iterations": out.iterations.len(),
        "audit_range": [out.audit_range.0, out.audit_range.1],
        "elapsed_ms": out.elapsed_ms,
    })
}

async fn post_turn(State(app): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let map = object_body(&body, &[("query", Field::Str)])?;
    let query = map["query"].as_str().unwrap_or_default().to_string();
    let slot = app.session(&id)?;
    let mut guard = slot.try_lock_owned().map_err(|_| ApiError::conflict("a turn is already running in this session"))?;
    let engine = app.engine.clone();
    let sid = id.clone();
    tokio::task::spawn_blocking(move || {
        let out = engine
            .run_turn(&mut guard.state, &query)
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "turn-failed", e.to_string()))?;
        let turn = guard.turns.len();
        let body = turn_json(&sid, turn, &out);
        guard.turns.push(TurnRecord { outcome: out, human_signal: false });
        Ok(Json(body))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
}

#[derive(Deserialize)]
struct PageQuery {
    offset: Option<usize>,
    limit: Option<usize>,
}

async fn audit_page(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<PageQuery>,
) -> ApiResult<Json<Value>> {
    let slot = app.session(&id)?;
    let d = slot.lock().await;
    let (offset, limit) = (q.offset.unwrap_or(0), q.limit.unwrap_or(100).min(1000));
    let trail = d.state.audit();
    Ok(Json(json!({
        "session_id": id,
        "total": trail.len(),
        "offset": offset,
        "events": trail.page(offset, limit),
    })))
}

async fn post_approval(State(app): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let map = object_body(&body, &[("decision", Field::Str), ("turn", Field::OptUint), ("note", Field::OptStr)])?;
    let kind: ApprovalKind =
        serde_json::from_value(map["decision"].clone()).map_err(|_| ApiError::validation(vec!["decision".into()]))?;
    let note = map.get("note").and_then(Value::as_str).unwrap_or_default().to_string();
    let slot = app.session(&id)?;
    let mut d = slot.try_lock_owned().map_err(|_| ApiError::conflict("a turn is running in this session"))?;
    let turn = match map.get("turn").and_then(Value::as_u64) {
        Some(t) => t as usize,
        None => d.turns.len().checked_sub(1).ok_or_else(|| ApiError::conflict("no turn to approve"))?,
    };
    let rec = d.turns.get(turn).ok_or_else(|| ApiError::not_found("turn", &turn.to_string()))?;
    if rec.human_signal {
        return Err(ApiError::conflict(format!("turn {turn} already has a human decision; refresh")));
    }
    let status = rec.outcome.status;
    if kind == ApprovalKind::Approve && !matches!(status, TurnStatus::Accepted | TurnStatus::Unverified) {
        return Err(ApiError::conflict(format!("turn {turn} is {status:?}; only an override applies")));
    }
    let retained = rec.outcome.verdict.as_ref().map(|v| v.decision);
    let engine = app.engine.clone();
    let sid = id.clone();
    tokio::task::spawn_blocking(move || {
        engine
            .approve(&mut d.state, kind, Some(turn as u64), &note, retained)
            .map_err(|e| ApiError::internal(e.to_string()))?;
        d.turns[turn].human_signal = true;
        let audit_index = d.state.audit().len() - 1;
        Ok(Json(json!({
            "session_id": sid,
            "turn": turn,
            "decision": kind,
            "turn_status": status,
            "retained_verdict": retained,
            "audit_index": audit_index,
            "approval": d.state.approvals().last(),
        })))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
}

async fn evidence(State(app): State<Arc<AppState>>, Path(triple_id): Path<String>) -> ApiResult<Json<Value>> {
    if let Some(r) = app.engine.kg.as_ref().and_then(|k| k.store.get(&triple_id)) {
        return Ok(Json(serde_json::to_value(r).expect("records serialize")));
    }
    // Stores loaded into individual sessions.
    let slots: Vec<_> = app.sessions.read().expect("session map").values().cloned().collect();
    let mut dirs = Vec::new();
    for s in slots {
        if let Ok(d) = s.try_lock() {
            if let Some(h) = d.state.resource_of_kind(ResourceKind::KgStore) {
                dirs.push(h.path());
            }
        }
    }
    let id = triple_id.clone();
    let found = tokio::task::spawn_blocking(move || {
        dirs.iter().find_map(|p| TripleStore::load(p).ok().and_then(|s| s.get(&id).cloned()))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?;
    match found {
        Some(r) => Ok(Json(serde_json::to_value(r).expect("records serialize"))),
        None => Err(ApiError::not_found("triple", &triple_id)),
    }
}

/// Bind and serve until the process ends.
pub async fn serve(app: Arc<AppState>, bind: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(app)).await
}
