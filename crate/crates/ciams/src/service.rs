//! Batch HTTP service: recommendation, AutoML fit with disk-backed
//! sessions, and prediction against a stored session.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;

use ciams_core::error::CiamsError;
use ciams_core::mapper::MapperBundle;
use ciams_core::recommend::{automl_fit, AutoMLModel, Mode};
use ciams_core::Config;

use crate::commands::{parse_dataset, parse_unlabeled, recommendation_json, run_recommend, FitSummary};

pub struct AppState {
    pub bundle: MapperBundle,
    pub cfg: Config,
    pub sessions_dir: PathBuf,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> ApiError {
        ApiError {
            status,
            message: message.into(),
        }
    }
}

impl From<CiamsError> for ApiError {
    fn from(e: CiamsError) -> ApiError {
        let status = if e.is_validation() {
            StatusCode::BAD_REQUEST
        } else {
            StatusCode::INTERNAL_SERVER_ERROR
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.cfg.max_body_bytes;
    Router::new()
        .route("/health", get(health))
        .route("/recommend", post(recommend_handler))
        .route("/fit", post(fit_handler))
        .route("/predict", post(predict_handler))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Serves until the process is interrupted.
pub async fn serve(state: Arc<AppState>, listener: TcpListener) -> std::io::Result<()> {
    std::fs::create_dir_all(&state.sessions_dir)?;
    let sweeper = state.clone();
    tokio::spawn(async move {
        let ttl = sweeper.cfg.session_ttl_secs;
        let mut tick = tokio::time::interval(Duration::from_secs(ttl.clamp(1, 60)));
        loop {
            tick.tick().await;
            let dir = sweeper.sessions_dir.clone();
            let _ = tokio::task::spawn_blocking(move || sweep_sessions(&dir, ttl)).await;
        }
    });
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

async fn health(State(st): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "model_version": st.bundle.version,
        "model_fingerprint": st.bundle.fingerprint(),
        "schema_len": st.bundle.schema.len(),
    }))
}

#[derive(Debug, Deserialize)]
struct RecommendQuery {
    mode: Option<String>,
    top: Option<usize>,
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

async fn recommend_handler(
    State(st): State<Arc<AppState>>,
    Query(q): Query<RecommendQuery>,
    body: Bytes,
) -> ApiResult<Response> {
    let mode = match q.mode.as_deref() {
        Some(m) => m.parse::<Mode>()?,
        None => Mode::default(),
    };
    let top = q.top.unwrap_or(6);
    if !(1..=6).contains(&top) {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "top must be between 1 and 6"));
    }
    let text = blocking(move || {
        let d = parse_dataset(&body, "request", &st.cfg)?;
        let rec = run_recommend(&st.bundle, &d, mode, &st.cfg)?;
        Ok(recommendation_json(&rec, top, st.cfg.seed))
    })
    .await?;
    Ok(([(axum::http::header::CONTENT_TYPE, "application/json")], text).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
struct SessionFile {
    created_unix: u64,
    model: AutoMLModel,
}

#[derive(Debug, Serialize)]
struct FitResponse {
    session_id: String,
    #[serde(flatten)]
    summary: FitSummary,
}

async fn fit_handler(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<FitResponse>> {
    let resp = blocking(move || {
        let d = parse_dataset(&body, "labeled", &st.cfg)?;
        let model = automl_fit(&st.bundle, &d, &st.cfg, st.cfg.seed)?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let summary = FitSummary::of(&model);
        let file = SessionFile {
            created_unix: now_unix(),
            model,
        };
        let bytes = serde_json::to_vec(&file).map_err(|e| CiamsError::Internal(e.to_string()))?;
        write_atomic(&session_path(&st.sessions_dir, &id), &bytes)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        Ok(FitResponse {
            session_id: id,
            summary,
        })
    })
    .await?;
    Ok(Json(resp))
}

async fn predict_handler(
    State(st): State<Arc<AppState>>,
    Query(q): Query<HashMap<String, String>>,
    body: Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    let id = q
        .get("session")
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing session parameter"))?;
    blocking(move || {
        let session = load_session(&st.sessions_dir, &id, st.cfg.session_ttl_secs)?;
        let x = parse_unlabeled(&body, &session.model.feature_names, &st.cfg)?;
        let preds = session.model.predict(&x)?;
        let labels: Vec<&str> = preds.iter().map(|&p| session.model.label_symbol(p)).collect();
        Ok(Json(json!({
            "session_id": id,
            "model_class": session.model.chosen.model_class,
            "predictions": labels,
        })))
    })
    .await
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn valid_session_id(id: &str) -> bool {
    id.len() == 32 && id.bytes().all(|b| b.is_ascii_hexdigit())
}

fn session_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.json"))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(tmp, path)
}

fn load_session(dir: &Path, id: &str, ttl: u64) -> ApiResult<SessionFile> {
    let not_found = || ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {id}"));
    if !valid_session_id(id) {
        return Err(not_found());
    }
    let path = session_path(dir, id);
    let bytes = std::fs::read(&path).map_err(|_| not_found())?;
    let s: SessionFile = serde_json::from_slice(&bytes)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("corrupt session: {e}")))?;
    if now_unix().saturating_sub(s.created_unix) > ttl {
        let _ = std::fs::remove_file(&path);
        return Err(not_found());
    }
    Ok(s)
}

/// Removes sessions older than `ttl` seconds; returns how many were removed.
pub fn sweep_sessions(dir: &Path, ttl: u64) -> usize {
    let Ok(entries) = std::fs::read_dir(dir) else {
        return 0;
    };
    let now = now_unix();
    let mut removed = 0;
    for e in entries.flatten() {
        let path = e.path();
        if path.extension().is_none_or(|x| x != "json") {
            continue;
        }
        let expired = std::fs::read(&path)
            .ok()
            .and_then(|b| serde_json::from_slice::<serde_json::Value>(&b).ok())
            .and_then(|v| v.get("created_unix").and_then(|c| c.as_u64()))
            .is_none_or(|c| now.saturating_sub(c) > ttl);
        if expired && std::fs::remove_file(&path).is_ok() {
            removed += 1;
        }
    }
    if removed > 0 {
        log::info!("evicted {removed} expired sessions");
    }
    removed
}
