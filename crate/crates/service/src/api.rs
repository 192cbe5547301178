//! HTTP routes.
//!
//! | method | path                                 | success body            |
//! |--------|--------------------------------------|-------------------------|
//! | POST   | `/sessions?filename=<name>`          | `Session`               |
//! | POST   | `/sessions/{id}/analyze`             | `AnalyzeResponse`       |
//! | GET    | `/sessions/{id}/results`             | `Vec<ResultRow>`        |
//! | GET    | `/sessions/{id}/lines/{n}/attention` | `AttentionPayload`      |
//! | GET    | `/sessions/{id}/lines/{n}/report`    | `ReportPayload`         |
//! | POST   | `/feedback`                          | `FeedbackAck`           |
//!
//! Errors are `{"code": <slug>, "message": <text>}` with the matching status.

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashSet;
use std::sync::{Arc, Mutex};

use logsight_core::attnlysis::AnalysisSummary;
use logsight_core::encoder::{Checkpoint, TokenAttribution};
use logsight_core::logcore::{parse_text, DatasetFormat, Label};
use logsight_core::pipeline::{analyze_line, PipelineConfig};
use logsight_core::reportgen::{render_analysis_report, DetectionResponse, Severity};

use crate::questionnaire::{Feedback, Questionnaire};
use crate::store::{Outcome, Session, SessionStatus, SessionStore, StoreError, StoredAnalysis};

pub const EP_CREATE: &str = "create_session";
pub const EP_ANALYZE: &str = "analyze_session";
pub const EP_RESULTS: &str = "get_results";
pub const EP_ATTENTION: &str = "get_line_attention";
pub const EP_REPORT: &str = "get_line_report";
pub const EP_FEEDBACK: &str = "post_feedback";
pub const EP_RECOVER: &str = "recover";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status: status.as_u16(), code: code.into(), message: message.into() }
    }

    fn not_found(what: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("{what} not found"))
    }

    fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "invalid_state", message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        tracing::error!("{e}");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "store_error", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

pub struct AppState {
    pub store: Arc<dyn SessionStore>,
    pub checkpoint: Option<Arc<Checkpoint>>,
    pub pipeline: PipelineConfig,
    pub questionnaire: Questionnaire,
    pub max_upload_bytes: usize,
    leases: Mutex<HashSet<String>>,
}

impl AppState {
    /// Sessions left in `Analyzing` by an interrupted run are marked
    /// `Failed`.
    pub fn new(
        store: Arc<dyn SessionStore>,
        checkpoint: Option<Arc<Checkpoint>>,
        pipeline: PipelineConfig,
        questionnaire: Questionnaire,
        max_upload_bytes: usize,
    ) -> Result<Self, StoreError> {
        for mut s in store.list()? {
            if s.status == SessionStatus::Analyzing {
                s.status = SessionStatus::Failed;
                s.diagnostic = Some("analysis interrupted by a restart".into());
                store.update(&s)?;
                store.log_interaction(Some(&s.session_id), EP_RECOVER, "", Outcome::Error(500))?;
            }
        }
        Ok(Self {
            store,
            checkpoint,
            pipeline,
            questionnaire,
            max_upload_bytes,
            leases: Mutex::new(HashSet::new()),
        })
    }
}

type Shared = Arc<AppState>;

pub fn router(state: Shared) -> Router {
    let limit = state.max_upload_bytes;
    Router::new()
        .route("/sessions", post(create_session).layer(DefaultBodyLimit::max(limit)))
        .route("/sessions/{id}/analyze", post(analyze_session))
        .route("/sessions/{id}/results", get(get_results))
        .route("/sessions/{id}/lines/{n}/attention", get(get_line_attention))
        .route("/sessions/{id}/lines/{n}/report", get(get_line_report))
        .route("/feedback", post(post_feedback))
        .fallback(|| async { ApiError::not_found("route") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed on this route")
        })
        .with_state(state)
}

fn digest(method: &Method, uri: &Uri, body: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(method.as_str().as_bytes());
    h.update(b" ");
    h.update(uri.to_string().as_bytes());
    h.update(b"\n");
    h.update(body);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Record the interaction, then turn the result into a response.
fn finish<T: Serialize>(
    state: &AppState,
    session: Option<&str>,
    endpoint: &str,
    digest: &str,
    result: Result<T, ApiError>,
) -> Response {
    let outcome = match &result {
        Ok(_) => Outcome::Ok,
        Err(e) => Outcome::Error(e.status),
    };
    if let Err(e) = state.store.log_interaction(session, endpoint, digest, outcome) {
        return ApiError::from(e).into_response();
    }
    match result {
        Ok(body) => Json(body).into_response(),
        Err(e) => e.into_response(),
    }
}

/// A syntactically valid id that exists in the store.
fn find_session(state: &AppState, id: &str) -> Result<Option<Session>, ApiError> {
    if uuid::Uuid::parse_str(id).is_err() {
        return Ok(None);
    }
    Ok(state.store.session(id)?)
}

#[derive(Deserialize)]
pub struct UploadQuery {
    pub filename: Option<String>,
}

async fn create_session(
    State(state): State<Shared>,
    method: Method,
    uri: Uri,
    Query(q): Query<UploadQuery>,
    body: Result<Bytes, BytesRejection>,
) -> Response {
    let (digest, result) = match body {
        Err(rejection) => {
            let status = rejection.status();
            let err = if status == StatusCode::PAYLOAD_TOO_LARGE {
                ApiError::new(status, "payload_too_large", format!("upload exceeds {} bytes", state.max_upload_bytes))
            } else {
                ApiError::new(status, "bad_request", rejection.body_text())
            };
            (digest(&method, &uri, b""), Err(err))
        }
        Ok(bytes) => (digest(&method, &uri, &bytes), create(&state, q.filename, &bytes)),
    };
    let id = result.as_ref().ok().map(|s| s.session_id.clone());
    finish(&state, id.as_deref(), EP_CREATE, &digest, result)
}

fn create(state: &AppState, filename: Option<String>, bytes: &[u8]) -> Result<Session, ApiError> {
    if bytes.is_empty() {
        return Err(ApiError::bad_request("upload is empty"));
    }
    let text = std::str::from_utf8(bytes).map_err(|_| ApiError::bad_request("upload is not valid UTF-8"))?;
    let records = parse_text(text, DatasetFormat::RawLines).map_err(|e| ApiError::bad_request(e.to_string()))?;
    if records.is_empty() {
        return Err(ApiError::bad_request("upload contains no log lines"));
    }
    let session = Session {
        session_id: uuid::Uuid::new_v4().to_string(),
        created_at: Utc::now(),
        source_filename: filename.unwrap_or_else(|| "upload.log".into()),
        status: SessionStatus::Uploaded,
        line_count: records.len(),
        diagnostic: None,
    };
    state.store.create(&session, bytes)?;
    Ok(session)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub line_no: usize,
    pub verdict: Label,
    pub confidence: f64,
    pub severity: Severity,
    pub event: String,
}

impl ResultRow {
    fn from_stored(a: &StoredAnalysis) -> Self {
        Self {
            line_no: a.line_no,
            verdict: a.response.verdict,
            confidence: a.response.confidence,
            severity: a.response.severity,
            event: a.response.event.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeResponse {
    pub session_id: String,
    pub status: SessionStatus,
    pub line_count: usize,
    pub anomaly_count: usize,
    pub lines: Vec<ResultRow>,
}

struct Lease<'a> {
    state: &'a AppState,
    id: String,
}

impl Drop for Lease<'_> {
    fn drop(&mut self) {
        self.state.leases.lock().unwrap_or_else(|p| p.into_inner()).remove(&self.id);
    }
}

fn acquire<'a>(state: &'a AppState, id: &str) -> Option<Lease<'a>> {
    let mut leases = state.leases.lock().unwrap_or_else(|p| p.into_inner());
    leases.insert(id.to_string()).then(|| Lease { state, id: id.to_string() })
}

async fn analyze_session(State(state): State<Shared>, method: Method, uri: Uri, Path(id): Path<String>) -> Response {
    let digest = digest(&method, &uri, b"");
    let worker = state.clone();
    let id2 = id.clone();
    let joined = tokio::task::spawn_blocking(move || run_analysis(&worker, &id2)).await;
    let (known, result) = joined.unwrap_or_else(|e| {
        (true, Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())))
    });
    finish(&state, known.then_some(id.as_str()), EP_ANALYZE, &digest, result)
}

/// Returns whether the session exists, and the outcome.
fn run_analysis(state: &AppState, id: &str) -> (bool, Result<AnalyzeResponse, ApiError>) {
    let session = match find_session(state, id) {
        Ok(Some(s)) => s,
        Ok(None) => return (false, Err(ApiError::not_found("session"))),
        Err(e) => return (false, Err(e)),
    };
    (true, analyze_existing(state, session))
}

fn analyze_existing(state: &AppState, session: Session) -> Result<AnalyzeResponse, ApiError> {
    let Some(_lease) = acquire(state, &session.session_id) else {
        return Err(ApiError::conflict("session is already being analyzed"));
    };
    // Re-read under the lease so a finished run is seen.
    let mut session = state.store.session(&session.session_id)?.ok_or_else(|| ApiError::not_found("session"))?;
    if session.status != SessionStatus::Uploaded {
        return Err(ApiError::conflict(format!("session is {:?}, expected Uploaded", session.status)));
    }
    let Some(checkpoint) = state.checkpoint.clone() else {
        return Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "model_unavailable", "no model checkpoint is configured"));
    };
    session.status = SessionStatus::Analyzing;
    state.store.update(&session)?;

    match analyze_lines(state, &session, &checkpoint) {
        Ok(records) => {
            state.store.put_analyses(&session.session_id, &records)?;
            session.status = SessionStatus::Done;
            state.store.update(&session)?;
            let lines: Vec<ResultRow> = records.iter().map(ResultRow::from_stored).collect();
            Ok(AnalyzeResponse {
                session_id: session.session_id,
                status: session.status,
                line_count: lines.len(),
                anomaly_count: lines.iter().filter(|r| r.verdict == Label::Anomaly).count(),
                lines,
            })
        }
        Err(message) => {
            session.status = SessionStatus::Failed;
            session.diagnostic = Some(message.clone());
            state.store.update(&session)?;
            Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "analysis_failed", message))
        }
    }
}

/// Lines are processed in parallel and collected in line order.
fn analyze_lines(state: &AppState, session: &Session, checkpoint: &Checkpoint) -> Result<Vec<StoredAnalysis>, String> {
    let bytes = state.store.input(&session.session_id).map_err(|e| e.to_string())?;
    let text = String::from_utf8(bytes).map_err(|e| e.to_string())?;
    let records = parse_text(&text, DatasetFormat::RawLines).map_err(|e| e.to_string())?;
    records
        .par_iter()
        .map(|r| {
            analyze_line(r, checkpoint, &state.pipeline)
                .map(|a| StoredAnalysis::new(&session.session_id, a))
                .map_err(|e| e.to_string())
        })
        .collect()
}

fn done_session(state: &AppState, id: &str) -> Result<Session, ApiError> {
    let session = find_session(state, id)?.ok_or_else(|| ApiError::not_found("session"))?;
    if session.status != SessionStatus::Done {
        return Err(ApiError::conflict(format!("session is {:?}, expected Done", session.status)));
    }
    Ok(session)
}

fn known(state: &AppState, id: &str) -> bool {
    matches!(find_session(state, id), Ok(Some(_)))
}

async fn get_results(State(state): State<Shared>, method: Method, uri: Uri, Path(id): Path<String>) -> Response {
    let result = done_session(&state, &id).and_then(|_| {
        Ok(state.store.analyses(&id)?.iter().map(ResultRow::from_stored).collect::<Vec<_>>())
    });
    let session = known(&state, &id).then_some(id.as_str());
    finish(&state, session, EP_RESULTS, &digest(&method, &uri, b""), result)
}

fn stored_line(state: &AppState, id: &str, n: usize) -> Result<StoredAnalysis, ApiError> {
    done_session(state, id)?;
    state.store.analysis(id, n)?.ok_or_else(|| ApiError::not_found("line"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionPayload {
    pub session_id: String,
    pub line_no: usize,
    pub tokens: Vec<String>,
    pub num_layers: usize,
    pub num_heads: usize,
    pub seq_len: usize,
    /// `[layers][heads][seq][seq]`
    pub attentions: Vec<Vec<Vec<Vec<f64>>>>,
}

async fn get_line_attention(
    State(state): State<Shared>,
    method: Method,
    uri: Uri,
    Path((id, n)): Path<(String, usize)>,
) -> Response {
    let result = stored_line(&state, &id, n).map(|a| {
        let att = &a.prediction.attentions;
        AttentionPayload {
            session_id: a.session_id.clone(),
            line_no: a.line_no,
            num_layers: att.num_layers(),
            num_heads: att.num_heads(),
            seq_len: att.seq_len(),
            attentions: att.to_nested(),
            tokens: a.prediction.tokens,
        }
    });
    let session = known(&state, &id).then_some(id.as_str());
    finish(&state, session, EP_ATTENTION, &digest(&method, &uri, b""), result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportPayload {
    pub session_id: String,
    pub line_no: usize,
    pub report_text: String,
    pub summary: AnalysisSummary,
    pub attribution: TokenAttribution,
    pub response: DetectionResponse,
}

async fn get_line_report(
    State(state): State<Shared>,
    method: Method,
    uri: Uri,
    Path((id, n)): Path<(String, usize)>,
) -> Response {
    let result = stored_line(&state, &id, n).map(|a| ReportPayload {
        report_text: render_analysis_report(&a.summary).1,
        session_id: a.session_id,
        line_no: a.line_no,
        summary: a.summary,
        attribution: a.attribution,
        response: a.response,
    });
    let session = known(&state, &id).then_some(id.as_str());
    finish(&state, session, EP_REPORT, &digest(&method, &uri, b""), result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackAck {
    pub session_id: String,
    pub accepted: usize,
}

async fn post_feedback(State(state): State<Shared>, method: Method, uri: Uri, body: Bytes) -> Response {
    let digest = digest(&method, &uri, &body);
    let parsed: Result<Feedback, ApiError> =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("malformed feedback: {e}")));
    let session = parsed.as_ref().ok().filter(|f| known(&state, &f.session_id)).map(|f| f.session_id.clone());
    let result = parsed.and_then(|fb| {
        if session.is_none() {
            return Err(ApiError::not_found("session"));
        }
        state.questionnaire.validate(&fb).map_err(ApiError::bad_request)?;
        state.store.append_feedback(&fb)?;
        Ok(FeedbackAck { session_id: fb.session_id, accepted: fb.answers.len() })
    });
    finish(&state, session.as_deref(), EP_FEEDBACK, &digest, result)
}

/// Session status implied by an interaction log.
pub fn replay_status(entries: &[crate::store::InteractionLogEntry]) -> Option<SessionStatus> {
    let mut status = None;
    for e in entries {
        status = match (e.endpoint.as_str(), &e.outcome) {
            (EP_CREATE, Outcome::Ok) => Some(SessionStatus::Uploaded),
            (EP_ANALYZE, Outcome::Ok) => Some(SessionStatus::Done),
            (EP_ANALYZE, Outcome::Error(422)) | (EP_RECOVER, _) => Some(SessionStatus::Failed),
            _ => status,
        };
    }
    status
}
