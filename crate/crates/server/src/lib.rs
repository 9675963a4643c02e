//! HTTP API over the ideator engine.
//!
//! Every route lives under `/api/v1`. Mutations of one session are serialized
//! through a per-session FIFO lock, and all backend calls share one global
//! concurrency cap. Request and response shapes are listed in `docs/api.md`.

mod config;
mod error;
mod views;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ideator_core::llm::{connect, CompletionRequest, CompletionResponse, LlmError};
use ideator_core::session::Sources;
use ideator_core::{
    export_transcript, BatchOutcome, CompletionBackend, CreativityLevel, ExportOptions, Ideator,
    MoveRegistry, Rating, Session, SessionStore, DEFAULT_IDEAS_PER_MOVE,
};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::{Mutex as AsyncMutex, OwnedMutexGuard, Semaphore};
use uuid::Uuid;

pub use config::{ApiConfig, ConfigError, DEFAULT_LISTEN_ADDRESS, DEFAULT_MAX_INFLIGHT};
pub use error::{ApiError, ErrorBody};
pub use views::{BatchView, GenerateResponse, IdeaView, MoveSetView, MoveView, SessionView};

/// Upper bound on ideas requested per move in one call.
pub const MAX_COUNT_PER_MOVE: u32 = 10;

/// Wraps a backend so that at most `permits` completions run at once.
struct GatedBackend {
    inner: Arc<dyn CompletionBackend>,
    permits: Arc<Semaphore>,
}

#[async_trait]
impl CompletionBackend for GatedBackend {
    fn backend_id(&self) -> &str {
        self.inner.backend_id()
    }

    async fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        let _permit = self
            .permits
            .acquire()
            .await
            .map_err(|_| LlmError::Transport("backend gate closed".into()))?;
        self.inner.complete(request).await
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Registry(#[from] ideator_core::moves::RegistryError),
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error("sessions_dir: {0}")]
    Store(#[from] ideator_core::session::StoreError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
}

struct Inner {
    ideator: Ideator,
    store: SessionStore,
    api_key: Option<String>,
    session_locks: Mutex<HashMap<Uuid, Arc<AsyncMutex<()>>>>,
}

/// Shared service state. Cheap to clone.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    /// Builds state around an explicit backend and id/clock sources.
    pub fn new(
        config: &ApiConfig,
        registry: MoveRegistry,
        backend: Arc<dyn CompletionBackend>,
        sources: Sources,
    ) -> Result<Self, StartupError> {
        config.validate()?;
        let store = SessionStore::open(&config.sessions_dir)?;
        let gated = Arc::new(GatedBackend {
            inner: backend,
            permits: Arc::new(Semaphore::new(config.max_inflight_llm_calls)),
        });
        let ideator = Ideator::new(
            Arc::new(registry),
            gated,
            config.generation.clone(),
            sources,
        );
        Ok(Self {
            inner: Arc::new(Inner {
                ideator,
                store,
                api_key: config.api_key.clone(),
                session_locks: Mutex::new(HashMap::new()),
            }),
        })
    }

    /// Builds state from configuration alone, with system clock and random ids.
    pub fn from_config(config: &ApiConfig) -> Result<Self, StartupError> {
        let registry = match &config.registry_path {
            Some(path) => MoveRegistry::from_path(path)?,
            None => MoveRegistry::builtin().clone(),
        };
        let backend = connect(&config.backend)?;
        Self::new(config, registry, backend, Sources::system())
    }

    pub fn ideator(&self) -> &Ideator {
        &self.inner.ideator
    }

    pub fn store(&self) -> &SessionStore {
        &self.inner.store
    }

    /// Waits for exclusive write access to one session. Waiters are served
    /// in arrival order.
    async fn lock_session(&self, id: Uuid) -> OwnedMutexGuard<()> {
        let lock = {
            let mut locks = self.inner.session_locks.lock().expect("lock map poisoned");
            locks.entry(id).or_default().clone()
        };
        lock.lock_owned().await
    }

    fn load(&self, id: &str) -> Result<Session, ApiError> {
        let id = parse_session_id(id)?;
        Ok(self.inner.store.load(id)?)
    }
}

fn parse_session_id(raw: &str) -> Result<Uuid, ApiError> {
    raw.parse()
        .map_err(|_| ApiError::not_found("session_not_found", format!("session {raw} not found")))
}

fn parse_idea_id(raw: &str) -> Result<Uuid, ApiError> {
    raw.parse()
        .map_err(|_| ApiError::not_found("idea_not_found", format!("unknown idea {raw}")))
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::bad_request("invalid_body", e.body_text()))
}

/// The full route table.
pub fn router(state: AppState) -> Router {
    let protected = Router::new()
        .route("/moves", get(list_moves))
        .route("/movesets", get(list_move_sets))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/generate", post(generate))
        .route("/sessions/{id}/ideas/{idea_id}/rating", post(rate_idea))
        .route(
            "/sessions/{id}/ideas/{idea_id}/bookmark",
            post(bookmark_idea),
        )
        .route("/sessions/{id}/export", get(export_session))
        .route_layer(middleware::from_fn_with_state(
            state.clone(),
            require_api_key,
        ));
    let api = Router::new().route("/health", get(health)).merge(protected);
    Router::new()
        .nest("/api/v1", api)
        .fallback(|| async { ApiError::not_found("no_route", "no such endpoint") })
        .with_state(state)
}

/// Binds `config.listen_address` and serves until the process is stopped.
pub async fn serve(config: &ApiConfig) -> Result<(), StartupError> {
    let state = AppState::from_config(config)?;
    let addr = config.listen_addr()?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| StartupError::Bind {
            addr: addr.to_string(),
            source,
        })?;
    tracing::info!(%addr, backend = state.ideator().backend().backend_id(), "listening");
    axum::serve(listener, router(state))
        .await
        .map_err(|source| StartupError::Bind {
            addr: addr.to_string(),
            source,
        })
}

async fn require_api_key(State(state): State<AppState>, request: Request, next: Next) -> Response {
    if let Some(expected) = &state.inner.api_key {
        let given = request
            .headers()
            .get("x-api-key")
            .and_then(|v| v.to_str().ok());
        if given != Some(expected.as_str()) {
            return ApiError::unauthorized().into_response();
        }
    }
    next.run(request).await
}

async fn health(State(state): State<AppState>) -> Json<serde_json::Value> {
    let ideator = state.ideator();
    Json(json!({
        "status": "ok",
        "registry_version": ideator.registry().version(),
        "backend_kind": ideator.backend().backend_id(),
    }))
}

async fn list_moves(State(state): State<AppState>) -> Json<Vec<MoveView>> {
    Json(
        state
            .ideator()
            .registry()
            .moves()
            .map(MoveView::from)
            .collect(),
    )
}

async fn list_move_sets(State(state): State<AppState>) -> Json<Vec<MoveSetView>> {
    Json(
        state
            .ideator()
            .registry()
            .move_sets()
            .map(MoveSetView::from)
            .collect(),
    )
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    problem: String,
}

async fn create_session(
    State(state): State<AppState>,
    payload: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let req = body(payload)?;
    let session = state.ideator().create_session(&req.problem)?;
    state.store().save(&session)?;
    Ok((StatusCode::CREATED, Json(SessionView::from(&session))))
}

async fn get_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<SessionView>, ApiError> {
    Ok(Json(SessionView::from(&state.load(&id)?)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateRequest {
    #[serde(default)]
    move_ids: Option<Vec<String>>,
    #[serde(default)]
    set_id: Option<String>,
    #[serde(default)]
    target_idea_id: Option<Uuid>,
    #[serde(default)]
    creativity: CreativityLevel,
    #[serde(default = "default_count")]
    count: u32,
}

fn default_count() -> u32 {
    DEFAULT_IDEAS_PER_MOVE
}

enum Selection {
    Moves(Vec<String>),
    Set(String),
}

impl GenerateRequest {
    fn selection(&self) -> Result<Selection, ApiError> {
        match (&self.move_ids, &self.set_id) {
            (Some(_), Some(_)) => Err(ApiError::bad_request(
                "ambiguous_selection",
                "give exactly one of move_ids or set_id",
            )),
            (None, None) => Err(ApiError::bad_request(
                "empty_selection",
                "give exactly one of move_ids or set_id",
            )),
            (Some(ids), None) if ids.is_empty() => Err(ApiError::bad_request(
                "empty_selection",
                "move_ids is empty",
            )),
            (Some(ids), None) => Ok(Selection::Moves(ids.clone())),
            (None, Some(set)) => Ok(Selection::Set(set.clone())),
        }
    }
}

async fn generate(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<GenerateRequest>, JsonRejection>,
) -> Result<Json<GenerateResponse>, ApiError> {
    let session_id = parse_session_id(&id)?;
    let req = body(payload)?;
    let selection = req.selection()?;
    if req.count == 0 || req.count > MAX_COUNT_PER_MOVE {
        return Err(ApiError::bad_request(
            "invalid_count",
            format!("count must be between 1 and {MAX_COUNT_PER_MOVE}"),
        ));
    }

    let _guard = state.lock_session(session_id).await;
    let mut session = state.store().load(session_id)?;
    let ideator = state.ideator();
    let outcome: BatchOutcome = match &selection {
        Selection::Moves(ids) => {
            ideator
                .run_moves(
                    &mut session,
                    ids,
                    req.target_idea_id,
                    req.creativity,
                    req.count,
                )
                .await?
        }
        Selection::Set(set) => {
            ideator
                .run_move_set(
                    &mut session,
                    set,
                    req.target_idea_id,
                    req.creativity,
                    req.count,
                )
                .await?
        }
    };
    // Completed batches are kept even when a later move failed.
    if !outcome.batches.is_empty() {
        state.store().save(&session)?;
    }
    let response = GenerateResponse::new(session_id, ideator.registry(), &outcome);
    match outcome.failure {
        None => Ok(Json(response)),
        Some(failure) => {
            let failed_move = failure.move_id.to_string();
            let err: ApiError = failure.error.into();
            Err(err.with_details(json!({
                "failed_move": failed_move,
                "completed": response.batches,
            })))
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RateRequest {
    rating: Rating,
}

async fn rate_idea(
    State(state): State<AppState>,
    Path((id, idea_id)): Path<(String, String)>,
    payload: Result<Json<RateRequest>, JsonRejection>,
) -> Result<Json<IdeaView>, ApiError> {
    let session_id = parse_session_id(&id)?;
    let idea_id = parse_idea_id(&idea_id)?;
    let req = body(payload)?;
    let _guard = state.lock_session(session_id).await;
    let mut session = state.store().load(session_id)?;
    let view = IdeaView::from(session.rate(idea_id, req.rating)?);
    state.store().save(&session)?;
    Ok(Json(view))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BookmarkRequest {
    bookmarked: bool,
}

async fn bookmark_idea(
    State(state): State<AppState>,
    Path((id, idea_id)): Path<(String, String)>,
    payload: Result<Json<BookmarkRequest>, JsonRejection>,
) -> Result<Json<IdeaView>, ApiError> {
    let session_id = parse_session_id(&id)?;
    let idea_id = parse_idea_id(&idea_id)?;
    let req = body(payload)?;
    let _guard = state.lock_session(session_id).await;
    let mut session = state.store().load(session_id)?;
    let view = IdeaView::from(session.set_bookmark(idea_id, req.bookmarked)?);
    state.store().save(&session)?;
    Ok(Json(view))
}

#[derive(Deserialize)]
struct ExportQuery {
    #[serde(default)]
    bookmarks_only: bool,
}

async fn export_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<ExportQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(query) = query.map_err(|e| ApiError::bad_request("invalid_query", e.body_text()))?;
    let session = state.load(&id)?;
    let text = export_transcript(
        &session,
        Some(state.ideator().registry()),
        ExportOptions {
            bookmarks_only: query.bookmarks_only,
        },
    );
    Ok((
        [(header::CONTENT_TYPE, "text/markdown; charset=utf-8")],
        text,
    )
        .into_response())
}
