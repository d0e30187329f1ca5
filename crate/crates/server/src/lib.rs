//! HTTP/JSON service for the classroom Bell exercise.
//!
//! ```text
//! POST   /sessions                 {lives_per_system?, seed?}  -> Session
//! GET    /sessions/{id}                                        -> Session
//! DELETE /sessions/{id}                                        -> 204
//! POST   /sessions/{id}/rounds     {setting_a, setting_b}      -> RoundResult
//! GET    /sessions/{id}/rounds/{n}                             -> RoundResult
//! GET    /sessions/{id}/summary                                -> Summary
//! GET    /scenarios                                            -> [{name, description}]
//! GET    /scenarios/{name}                                     -> RunReport
//! ```
//!
//! Errors are `{code, message, details}`.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use plives::exercise::{self, ExerciseError, RoundResult, Session, Summary};
use plives::scenarios;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::net::TcpListener;
use tower_http::cors::{AllowOrigin, CorsLayer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
    pub details: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>, details: Value) -> Self {
        ApiError { status: status.as_u16(), code: code.into(), message: message.into(), details }
    }

    fn unknown_session(id: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "UnknownSession",
            format!("no session `{id}`"),
            serde_json::json!({ "id": id }),
        )
    }
}

impl From<ExerciseError> for ApiError {
    fn from(e: ExerciseError) -> Self {
        let message = e.to_string();
        match e {
            ExerciseError::NotRepresentable { n, minimal } => Self::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "NotRepresentable",
                message,
                serde_json::json!({ "lives_per_system": n, "minimal": minimal }),
            ),
            ExerciseError::BadSetting(s) => {
                Self::new(StatusCode::BAD_REQUEST, "BadSetting", message, serde_json::json!({ "setting": s }))
            }
            ExerciseError::UnknownRound(n) => {
                Self::new(StatusCode::NOT_FOUND, "UnknownRound", message, serde_json::json!({ "round": n }))
            }
            ExerciseError::Scenario(_) | ExerciseError::Engine(_) => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message, Value::Null)
            }
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BadRequest", e.body_text(), Value::Null)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone, Default, Deserialize)]
pub struct CreateSession {
    pub lives_per_system: Option<u64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct PlayRound {
    pub setting_a: u8,
    pub setting_b: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioEntry {
    pub name: String,
    pub description: String,
}

/// Sessions keyed by id. Each session has its own lock.
#[derive(Default)]
pub struct AppState {
    sessions: RwLock<BTreeMap<String, Arc<Mutex<Session>>>>,
    next_id: AtomicU64,
}

impl AppState {
    fn session(&self, id: &str) -> ApiResult<Arc<Mutex<Session>>> {
        self.sessions.read().expect("session map lock").get(id).cloned().ok_or_else(|| ApiError::unknown_session(id))
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("session map lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Default)]
pub struct ServerConfig {
    /// Allowed browser origins. Empty allows any origin.
    pub allow_origins: Vec<String>,
}

pub fn router() -> Router {
    router_with(Arc::new(AppState::default()), &ServerConfig::default())
}

pub fn router_with(state: Arc<AppState>, config: &ServerConfig) -> Router {
    let origins = if config.allow_origins.is_empty() {
        AllowOrigin::any()
    } else {
        AllowOrigin::list(config.allow_origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()))
    };
    let cors = CorsLayer::new()
        .allow_origin(origins)
        .allow_methods([Method::GET, Method::POST, Method::DELETE])
        .allow_headers([header::CONTENT_TYPE]);
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/rounds", post(play_round))
        .route("/sessions/{id}/rounds/{n}", get(get_round))
        .route("/sessions/{id}/summary", get(get_summary))
        .route("/scenarios", get(list_scenarios))
        .route("/scenarios/{name}", get(run_scenario))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such endpoint", Value::Null) })
        .layer(cors)
        .with_state(state)
}

/// Serve until the future is dropped.
pub async fn serve(listener: TcpListener, router: Router) -> std::io::Result<()> {
    axum::serve(listener, router).await
}

pub async fn bind(port: u16) -> std::io::Result<(TcpListener, SocketAddr)> {
    let listener = TcpListener::bind(("127.0.0.1", port)).await?;
    let addr = listener.local_addr()?;
    Ok((listener, addr))
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    body: Option<Json<CreateSession>>,
) -> ApiResult<(StatusCode, Json<Session>)> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let n = req.lives_per_system.unwrap_or(exercise::DEFAULT_LIVES);
    let id = format!("s{}", state.next_id.fetch_add(1, Ordering::SeqCst) + 1);
    let session = Session::new(id.clone(), n, req.seed.unwrap_or(0))?;
    let out = session.clone();
    state.sessions.write().expect("session map lock").insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(out)))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Session>> {
    let s = state.session(&id)?;
    let snapshot = s.lock().expect("session lock").clone();
    Ok(Json(snapshot))
}

async fn delete_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    match state.sessions.write().expect("session map lock").remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::unknown_session(&id)),
    }
}

async fn play_round(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<PlayRound>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<RoundResult>)> {
    let s = state.session(&id)?;
    let Json(req) = body?;
    let mut guard = s.lock().expect("session lock");
    let round = guard.play_round(req.setting_a, req.setting_b)?.clone();
    Ok((StatusCode::CREATED, Json(round)))
}

async fn get_round(
    State(state): State<Arc<AppState>>,
    Path((id, n)): Path<(String, usize)>,
) -> ApiResult<Json<RoundResult>> {
    let s = state.session(&id)?;
    let guard = s.lock().expect("session lock");
    Ok(Json(guard.round(n)?.clone()))
}

async fn get_summary(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Summary>> {
    let s = state.session(&id)?;
    let summary = s.lock().expect("session lock").summary();
    Ok(Json(summary))
}

async fn list_scenarios() -> Json<Vec<ScenarioEntry>> {
    Json(
        scenarios::catalog_descriptions()
            .into_iter()
            .map(|(name, description)| ScenarioEntry { name: name.to_string(), description: description.to_string() })
            .collect(),
    )
}

async fn run_scenario(Path(name): Path<String>) -> ApiResult<Json<scenarios::RunReport>> {
    let spec = scenarios::builtin(&name).map_err(|e| {
        ApiError::new(StatusCode::NOT_FOUND, "UnknownScenario", e.to_string(), serde_json::json!({ "name": name }))
    })?;
    let report = tokio::task::spawn_blocking(move || spec.compile().and_then(|sc| scenarios::run(&sc)))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string(), Value::Null))?
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "ScenarioFailed", e.to_string(), Value::Null))?;
    Ok(Json(report))
}
