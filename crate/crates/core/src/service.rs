//! HTTP chat service: sessions, turns, corpus info and health.
//!
//! ```text
//! POST /api/sessions                  -> 201 {"session_id": s}
//! POST /api/sessions/{id}/messages    -> 200 {"intent", "confidence", "response", "followup", "ended"}
//! GET  /api/info                      -> 200 summary
//! GET  /api/health                    -> 200 {"status": "ok"}
//! ```
//!
//! The classifier is built once at startup; until it is installed, session
//! endpoints answer 503. Turns on one session are serialized, distinct
//! sessions run in parallel.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tower_http::cors::{Any, CorsLayer};
use tower_http::services::ServeDir;

use crate::corpus::{load_corpus, Corpus, CorpusError};
use crate::dialog::{BotTurn, DialogConfig, DialogError, DialogSession, TranscriptEntry};
use crate::matcher::{Backend, BackendSetup, ClassifyError, Engine, SharedClassifier};

pub const DEFAULT_SESSION_TTL: Duration = Duration::from_secs(30 * 60);

/// Startup configuration for [`serve`].
#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub addr: SocketAddr,
    /// `None` serves the bundled demo corpus.
    pub corpus_path: Option<PathBuf>,
    pub backend: Backend,
    pub setup: BackendSetup,
    pub dialog: DialogConfig,
    pub seed: u64,
    pub session_ttl: Duration,
    /// Directory holding a built web UI, served at `/`.
    pub static_dir: Option<PathBuf>,
    /// Allowed CORS origin; `None` allows any.
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
            corpus_path: None,
            backend: Backend::EmbCosine,
            setup: BackendSetup::default(),
            dialog: DialogConfig::default(),
            seed: 0,
            session_ttl: DEFAULT_SESSION_TTL,
            static_dir: None,
            cors_origin: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error("invalid CORS origin {0:?}")]
    CorsOrigin(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Settings the running service needs per request.
#[derive(Debug, Clone, Copy)]
pub struct SessionSettings {
    pub backend: Backend,
    pub dialog: DialogConfig,
    pub seed: u64,
    pub ttl: Duration,
}

struct SessionSlot {
    session: DialogSession,
    last_active: Instant,
}

struct Inner {
    settings: SessionSettings,
    engine: RwLock<Option<Arc<Engine>>>,
    sessions: Mutex<HashMap<String, Arc<Mutex<SessionSlot>>>>,
}

/// Shared service state. Cheap to clone.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("service is starting up")]
    Unavailable,
    #[error("no such session")]
    NotFound,
    #[error("session has ended")]
    Gone,
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self {
            ApiError::Unavailable => StatusCode::SERVICE_UNAVAILABLE,
            ApiError::NotFound => StatusCode::NOT_FOUND,
            ApiError::Gone => StatusCode::GONE,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

/// 128 random bits from the OS, as 32 lowercase hex digits.
pub fn new_session_id() -> String {
    let mut bytes = [0u8; 16];
    OsRng.fill_bytes(&mut bytes);
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl AppState {
    pub fn new(settings: SessionSettings) -> AppState {
        AppState {
            inner: Arc::new(Inner { settings, engine: RwLock::new(None), sessions: Mutex::new(HashMap::new()) }),
        }
    }

    /// Make the service ready.
    pub fn install(&self, engine: Arc<Engine>) {
        *self.inner.engine.write().unwrap() = Some(engine);
    }

    pub fn is_ready(&self) -> bool {
        self.inner.engine.read().unwrap().is_some()
    }

    pub fn settings(&self) -> SessionSettings {
        self.inner.settings
    }

    fn engine(&self) -> Result<Arc<Engine>, ApiError> {
        self.inner.engine.read().unwrap().clone().ok_or(ApiError::Unavailable)
    }

    pub fn create_session(&self) -> Result<String, ApiError> {
        self.open_session(new_session_id())
    }

    /// Register a session under a caller-chosen id.
    pub fn open_session(&self, id: String) -> Result<String, ApiError> {
        let engine = self.engine()?;
        let session = DialogSession::new(engine.corpus().clone(), id.clone(), self.inner.settings.seed);
        let mut sessions = self.inner.sessions.lock().unwrap();
        self.sweep(&mut sessions);
        sessions.insert(id.clone(), Arc::new(Mutex::new(SessionSlot { session, last_active: Instant::now() })));
        Ok(id)
    }

    fn sweep(&self, sessions: &mut HashMap<String, Arc<Mutex<SessionSlot>>>) {
        let ttl = self.inner.settings.ttl;
        sessions.retain(|_, slot| match slot.try_lock() {
            Ok(s) => s.last_active.elapsed() < ttl,
            // busy sessions are live by definition
            Err(_) => true,
        });
    }

    fn slot(&self, id: &str) -> Result<Arc<Mutex<SessionSlot>>, ApiError> {
        let mut sessions = self.inner.sessions.lock().unwrap();
        let slot = sessions.get(id).cloned().ok_or(ApiError::NotFound)?;
        let expired = slot.lock().unwrap().last_active.elapsed() >= self.inner.settings.ttl;
        if expired {
            sessions.remove(id);
            return Err(ApiError::NotFound);
        }
        Ok(slot)
    }

    pub fn session_count(&self) -> usize {
        self.inner.sessions.lock().unwrap().len()
    }

    /// Run one turn. Blocks; call from a blocking context.
    pub fn post_message(&self, id: &str, text: &str) -> Result<BotTurn, ApiError> {
        if text.trim().is_empty() {
            return Err(ApiError::BadRequest("text must not be empty".into()));
        }
        let engine = self.engine()?;
        let slot = self.slot(id)?;
        let mut slot = slot.lock().unwrap();
        if slot.session.is_ended() {
            return Err(ApiError::Gone);
        }
        let classifier = SharedClassifier { engine, backend: self.inner.settings.backend };
        let turn = slot.session.handle_turn(text, &classifier, &self.inner.settings.dialog).map_err(|e| match e {
            DialogError::SessionEnded => ApiError::Gone,
            other => ApiError::Internal(other.to_string()),
        })?;
        slot.last_active = Instant::now();
        Ok(turn)
    }

    pub fn transcript(&self, id: &str) -> Option<Vec<TranscriptEntry>> {
        let slot = self.inner.sessions.lock().unwrap().get(id).cloned()?;
        let slot = slot.lock().unwrap();
        Some(slot.session.transcript().to_vec())
    }

    pub fn info(&self) -> Info {
        let engine = self.inner.engine.read().unwrap().clone();
        let backend = self.inner.settings.backend;
        match engine {
            None => Info { backend, ready: false, model_fingerprint: None, corpus: None },
            Some(engine) => Info {
                backend,
                ready: true,
                model_fingerprint: engine.model_fingerprint(backend),
                corpus: Some(CorpusSummary::of(engine.corpus())),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IntentSummary {
    pub tag: String,
    pub patterns: usize,
    pub responses: usize,
    pub followups: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CorpusSummary {
    pub tags: Vec<String>,
    pub goodbye_tag: String,
    pub intents: Vec<IntentSummary>,
    pub pattern_count: usize,
    pub response_count: usize,
}

impl CorpusSummary {
    pub fn of(corpus: &Corpus) -> CorpusSummary {
        CorpusSummary {
            tags: corpus.tags().map(str::to_string).collect(),
            goodbye_tag: corpus.goodbye_tag.clone(),
            intents: corpus
                .intents
                .iter()
                .map(|i| IntentSummary {
                    tag: i.tag.clone(),
                    patterns: i.patterns.len(),
                    responses: i.responses.len(),
                    followups: i.followups.len(),
                })
                .collect(),
            pattern_count: corpus.pattern_count(),
            response_count: corpus.response_count(),
        }
    }
}

/// Body of `GET /api/info`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Info {
    pub backend: Backend,
    pub ready: bool,
    pub model_fingerprint: Option<String>,
    #[serde(flatten)]
    pub corpus: Option<CorpusSummary>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MessageRequest {
    pub text: String,
}

/// Wire form of a [`BotTurn`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MessageResponse {
    pub intent: Option<String>,
    pub confidence: f64,
    pub response: String,
    pub followup: Option<String>,
    pub ended: bool,
}

impl From<BotTurn> for MessageResponse {
    fn from(t: BotTurn) -> Self {
        MessageResponse { intent: t.intent, confidence: t.confidence, response: t.response, followup: t.followup, ended: t.ended }
    }
}

async fn create_session(State(state): State<AppState>) -> Result<(StatusCode, Json<CreatedSession>), ApiError> {
    let session_id = state.create_session()?;
    Ok((StatusCode::CREATED, Json(CreatedSession { session_id })))
}

async fn post_message(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<MessageRequest>, JsonRejection>,
) -> Result<Json<MessageResponse>, ApiError> {
    let Json(body) = body.map_err(|e| ApiError::BadRequest(e.body_text()))?;
    let turn = tokio::task::spawn_blocking(move || state.post_message(&id, &body.text))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok(Json(turn.into()))
}

async fn info(State(state): State<AppState>) -> Json<Info> {
    Json(state.info())
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

/// The API routes, with CORS and optional static UI.
pub fn router(state: AppState, static_dir: Option<PathBuf>, cors_origin: Option<&str>) -> Result<Router, ServiceError> {
    let cors = match cors_origin {
        None => CorsLayer::new().allow_origin(Any),
        Some(origin) => CorsLayer::new()
            .allow_origin(HeaderValue::from_str(origin).map_err(|_| ServiceError::CorsOrigin(origin.to_string()))?),
    }
    .allow_methods(Any)
    .allow_headers(Any);

    let api = Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}/messages", post(post_message))
        .route("/api/info", get(info))
        .route("/api/health", get(health))
        .with_state(state);
    let app = match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    Ok(app.layer(cors))
}

/// Load the corpus and bring up the configured backend.
pub fn build_engine(config: &ServiceConfig) -> Result<Engine, ServiceError> {
    let corpus = match &config.corpus_path {
        Some(path) => load_corpus(path)?,
        None => Corpus::demo(),
    };
    let (engine, _) = Engine::for_backend(corpus, config.backend, &config.setup)?;
    Ok(engine)
}

/// Bind, start answering, train in the background, serve until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let state = AppState::new(SessionSettings {
        backend: config.backend,
        dialog: config.dialog,
        seed: config.seed,
        ttl: config.session_ttl,
    });
    let app = router(state.clone(), config.static_dir.clone(), config.cors_origin.as_deref())?;
    let listener = tokio::net::TcpListener::bind(config.addr).await?;
    tracing::info!(addr = %listener.local_addr()?, backend = %config.backend, "listening");

    let build_config = config.clone();
    let ready_state = state.clone();
    let failed = Arc::new(tokio::sync::Notify::new());
    let notify = failed.clone();
    let startup = tokio::task::spawn_blocking(move || {
        let result = build_engine(&build_config);
        match &result {
            Ok(_) => tracing::info!("classifier ready"),
            Err(e) => {
                tracing::error!(error = %e, "startup failed");
                notify.notify_one();
            }
        }
        result.map(|engine| ready_state.install(Arc::new(engine)))
    });

    axum::serve(listener, app)
        .with_graceful_shutdown(async move {
            tokio::select! {
                _ = tokio::signal::ctrl_c() => {}
                _ = failed.notified() => {}
            }
        })
        .await?;
    if startup.is_finished() {
        startup.await.map_err(|e| ServiceError::Io(std::io::Error::other(e.to_string())))??;
    }
    Ok(())
}
