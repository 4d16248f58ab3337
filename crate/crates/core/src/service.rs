//! JSON-over-HTTP front end for the engine.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::{oneshot, Mutex};
use tracing::{info, warn};

use crate::dialog::{BotResponse, Engine, IntentRef, LeadRecord, SessionState, TurnOutput};

pub const DEFAULT_TTL: Duration = Duration::from_secs(30 * 60);
pub const ADMIN_HEADER: &str = "x-admin-token";

/// Classifier and slot details for one turn. Only sent when asked for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnTrace {
    pub intent: Option<IntentRef>,
    pub confidence: Option<f64>,
    pub slots: BTreeMap<String, String>,
    pub lead: Option<LeadRecord>,
}

impl TurnTrace {
    pub fn new(out: &TurnOutput, state: &SessionState) -> Self {
        TurnTrace {
            intent: out.intent.clone(),
            confidence: out.confidence,
            slots: state.filled_slots.clone(),
            lead: out.lead.clone(),
        }
    }
}

/// Body of a message reply: the bot response, plus the trace on request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiReply {
    #[serde(flatten)]
    pub response: BotResponse,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<TurnTrace>,
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub session_ttl: Duration,
    pub admin_secret: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            session_ttl: DEFAULT_TTL,
            admin_secret: None,
        }
    }
}

struct SessionSlot {
    // tokio's mutex queues waiters fairly, so turns run in arrival order.
    state: Mutex<SessionState>,
    last_seen: std::sync::Mutex<Instant>,
}

pub struct AppState {
    engine: Arc<Engine>,
    config: ServiceConfig,
    sessions: std::sync::Mutex<HashMap<String, Arc<SessionSlot>>>,
    turns: AtomicU64,
}

impl AppState {
    pub fn new(engine: Arc<Engine>, config: ServiceConfig) -> Arc<Self> {
        Arc::new(AppState {
            engine,
            config,
            sessions: std::sync::Mutex::new(HashMap::new()),
            turns: AtomicU64::new(0),
        })
    }

    fn sessions(&self) -> std::sync::MutexGuard<'_, HashMap<String, Arc<SessionSlot>>> {
        self.sessions.lock().expect("session table poisoned")
    }

    /// Drops sessions idle for longer than the TTL; returns how many went.
    pub fn evict_idle(&self) -> usize {
        let ttl = self.config.session_ttl;
        let mut sessions = self.sessions();
        let before = sessions.len();
        sessions.retain(|_, s| s.last_seen.lock().expect("poisoned").elapsed() < ttl);
        before - sessions.len()
    }

    pub fn session_count(&self) -> usize {
        self.sessions().len()
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn no_session(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "session_not_found", format!("no session {id}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", r.body_text())
    }
}

#[derive(Deserialize)]
struct MessageIn {
    text: String,
}

#[derive(Deserialize, Default)]
struct MessageQuery {
    #[serde(default)]
    trace: bool,
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn create_session(State(app): State<Arc<AppState>>) -> (StatusCode, Json<serde_json::Value>) {
    let state = app.engine.start_session();
    let id = state.session_id.clone();
    let slot = Arc::new(SessionSlot {
        state: Mutex::new(state),
        last_seen: std::sync::Mutex::new(Instant::now()),
    });
    app.sessions().insert(id.clone(), slot);
    (StatusCode::CREATED, Json(serde_json::json!({ "session_id": id })))
}

async fn post_message(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<MessageQuery>,
    body: Result<Json<MessageIn>, JsonRejection>,
) -> Result<Json<ApiReply>, ApiError> {
    let Json(msg) = body?;
    let slot = app.sessions().get(&id).cloned().ok_or_else(|| ApiError::no_session(&id))?;
    let mut state = slot.state.lock().await;
    *slot.last_seen.lock().expect("poisoned") = Instant::now();
    let out = app
        .engine
        .handle_turn(&mut state, &msg.text)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "engine_error", e.to_string()))?;
    app.turns.fetch_add(1, Ordering::Relaxed);
    let trace = q.trace.then(|| TurnTrace::new(&out, &state));
    Ok(Json(ApiReply {
        response: out.response,
        trace,
    }))
}

async fn delete_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    match app.sessions().remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::no_session(&id)),
    }
}

async fn stats(State(app): State<Arc<AppState>>, headers: HeaderMap) -> Result<Json<serde_json::Value>, ApiError> {
    if let Some(secret) = &app.config.admin_secret {
        let given = headers.get(ADMIN_HEADER).and_then(|v| v.to_str().ok());
        if given != Some(secret.as_str()) {
            return Err(ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "admin token required"));
        }
    }
    Ok(Json(serde_json::json!({
        "sessions": app.session_count(),
        "turns": app.turns.load(Ordering::Relaxed),
    })))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}/messages", post(post_message))
        .route("/v1/sessions/{id}", delete(delete_session))
        .route("/v1/admin/stats", get(stats))
        .fallback(not_found)
        .with_state(app)
}

/// Serves until `shutdown` resolves, then flushes queued leads.
pub async fn serve_until(
    listener: tokio::net::TcpListener,
    app: Arc<AppState>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let reaper = {
        let app = app.clone();
        let every = (app.config.session_ttl / 4).clamp(Duration::from_millis(10), Duration::from_secs(60));
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(every);
            loop {
                tick.tick().await;
                let n = app.evict_idle();
                if n > 0 {
                    info!(evicted = n, "expired idle sessions");
                }
            }
        })
    };
    let result = axum::serve(listener, router(app.clone()))
        .with_graceful_shutdown(shutdown)
        .await;
    reaper.abort();
    if let Some(sinks) = app.engine.sinks() {
        sinks.retry_pending();
        if sinks.pending_retries() > 0 {
            warn!(pending = sinks.pending_retries(), "leads still undelivered at shutdown");
        }
    }
    result
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(engine: Arc<Engine>, config: ServiceConfig, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!(addr = %listener.local_addr()?, "listening");
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    serve_until(listener, AppState::new(engine, config), shutdown).await
}

/// A server running on its own thread and runtime; stops when dropped.
pub struct BackgroundServer {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl BackgroundServer {
    pub fn start(engine: Arc<Engine>, config: ServiceConfig) -> std::io::Result<Self> {
        let std_listener = std::net::TcpListener::bind("127.0.0.1:0")?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let (stop, stopped) = oneshot::channel::<()>();
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let thread = std::thread::spawn(move || {
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener).expect("listener");
                let shutdown = async {
                    let _ = stopped.await;
                };
                if let Err(e) = serve_until(listener, AppState::new(engine, config), shutdown).await {
                    warn!(error = %e, "background server failed");
                }
            });
        });
        Ok(BackgroundServer {
            addr,
            stop: Some(stop),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
