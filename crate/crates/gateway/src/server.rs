//! HTTP and WebSocket front end with a per-session actor.

use std::collections::BTreeMap;
use std::future::Future;
use std::io::{BufWriter, Write as _};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use sipmatch::arm::TaskSpec;
use sipmatch::config::{EngineConfig, DEFAULT_CONFIG_TOML};
use sipmatch::controller::{binding_table, InterfaceKind};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc, oneshot, Mutex};
use tokio::task::JoinHandle;
use tokio::time::{interval_at, Instant, MissedTickBehavior};
use tower_http::services::ServeDir;

use crate::engine::SessionEngine;
use crate::protocol::{Inbound, LogLine, Outbound};

const FRAME_BUFFER: usize = 64;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot prepare store {path}: {source}")]
    Store {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    /// Holds `configs/<name>.toml` and `sessions/<id>.jsonl`.
    pub store: PathBuf,
    pub static_dir: Option<PathBuf>,
    pub tick_ms: u64,
    /// Lag of the engine clock behind wall time, so inputs stamped up to
    /// this late still land before their tick.
    pub input_delay_ms: u64,
}

impl GatewayConfig {
    pub fn new(store: impl Into<PathBuf>) -> Self {
        Self {
            store: store.into(),
            static_dir: None,
            tick_ms: 50,
            input_delay_ms: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionDescriptor {
    pub session_id: String,
    pub interface: InterfaceKind,
    pub task: Option<String>,
    /// Unix milliseconds.
    pub created_at: u64,
    pub config_name: Option<String>,
    pub tick_ms: u64,
    pub input_delay_ms: u64,
    pub ws_path: String,
}

enum Command {
    Input(Inbound, oneshot::Sender<Result<(), String>>),
    Close(String),
}

struct SessionHandle {
    descriptor: SessionDescriptor,
    config: Arc<EngineConfig>,
    frames: broadcast::Sender<Outbound>,
    commands: mpsc::Sender<Command>,
    actor: JoinHandle<()>,
}

struct AppState {
    config: GatewayConfig,
    sessions: Mutex<BTreeMap<String, SessionHandle>>,
    counter: AtomicU64,
}

type Shared = Arc<AppState>;

pub struct Server {
    listener: TcpListener,
    state: Shared,
}

impl Server {
    /// Binds the listener and prepares the store directories.
    pub async fn bind(config: GatewayConfig, addr: SocketAddr) -> Result<Self, GatewayError> {
        for dir in ["configs", "sessions"] {
            let path = config.store.join(dir);
            std::fs::create_dir_all(&path).map_err(|source| GatewayError::Store {
                path: path.display().to_string(),
                source,
            })?;
        }
        let listener = TcpListener::bind(addr)
            .await
            .map_err(|source| GatewayError::Bind { addr, source })?;
        Ok(Self {
            listener,
            state: Arc::new(AppState {
                config,
                sessions: Mutex::new(BTreeMap::new()),
                counter: AtomicU64::new(0),
            }),
        })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Serves until `shutdown` resolves, then closes every session and
    /// flushes its log.
    pub async fn run_until(self, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), GatewayError> {
        let app = router(self.state.clone());
        axum::serve(self.listener, app).with_graceful_shutdown(shutdown).await?;
        let handles: Vec<_> = std::mem::take(&mut *self.state.sessions.lock().await).into_values().collect();
        for h in handles {
            close(h, "shutdown").await;
        }
        Ok(())
    }

    /// Serves until ctrl-c.
    pub async fn run(self) -> Result<(), GatewayError> {
        self.run_until(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    }
}

fn router(state: Shared) -> Router {
    let static_dir = state.config.static_dir.clone();
    let app = Router::new()
        .route("/health", get(health))
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}", axum::routing::delete(delete_session))
        .route("/sessions/{id}/ws", get(session_ws))
        .route("/configs/{name}", get(get_config).put(put_config))
        .with_state(state);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

fn error(status: StatusCode, reason: impl Into<String>) -> Response {
    (status, Json(serde_json::json!({ "error": reason.into() }))).into_response()
}

fn now_unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

async fn health(State(state): State<Shared>) -> Json<serde_json::Value> {
    let sessions = state.sessions.lock().await.len();
    Json(serde_json::json!({ "status": "ok", "sessions": sessions }))
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn config_path(store: &Path, name: &str) -> PathBuf {
    store.join("configs").join(format!("{name}.toml"))
}

/// Stored document, falling back to the built-in one for `default`.
async fn read_config(store: &Path, name: &str) -> Option<String> {
    match tokio::fs::read_to_string(config_path(store, name)).await {
        Ok(text) => Some(text),
        Err(_) if name == "default" => Some(DEFAULT_CONFIG_TOML.to_string()),
        Err(_) => None,
    }
}

async fn get_config(State(state): State<Shared>, UrlPath(name): UrlPath<String>) -> Response {
    if !valid_name(&name) {
        return error(StatusCode::BAD_REQUEST, format!("invalid config name `{name}`"));
    }
    match read_config(&state.config.store, &name).await {
        Some(text) => ([(axum::http::header::CONTENT_TYPE, "application/toml")], text).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("no config named `{name}`")),
    }
}

async fn put_config(State(state): State<Shared>, UrlPath(name): UrlPath<String>, body: String) -> Response {
    if !valid_name(&name) {
        return error(StatusCode::BAD_REQUEST, format!("invalid config name `{name}`"));
    }
    if let Err(e) = EngineConfig::from_toml(&body) {
        return error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string());
    }
    match tokio::fs::write(config_path(&state.config.store, &name), body).await {
        Ok(()) => StatusCode::NO_CONTENT.into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

#[derive(Debug, Deserialize)]
struct CreateSession {
    interface: InterfaceKind,
    #[serde(default)]
    config: Option<String>,
    #[serde(default)]
    task: Option<String>,
}

async fn create_session(State(state): State<Shared>, Json(req): Json<CreateSession>) -> Response {
    let config = match &req.config {
        None => EngineConfig::default(),
        Some(name) => {
            if !valid_name(name) {
                return error(StatusCode::BAD_REQUEST, format!("invalid config name `{name}`"));
            }
            let Some(text) = read_config(&state.config.store, name).await else {
                return error(StatusCode::NOT_FOUND, format!("no config named `{name}`"));
            };
            match EngineConfig::from_toml(&text) {
                Ok(c) => c,
                Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
            }
        }
    };
    let task = match req.task.as_deref().map(TaskSpec::shipped).transpose() {
        Ok(t) => t,
        Err(e) => return error(StatusCode::NOT_FOUND, e.to_string()),
    };

    let created_at = now_unix_ms();
    let n = state.counter.fetch_add(1, Ordering::Relaxed);
    let session_id = format!("{created_at:x}-{n}");
    let descriptor = SessionDescriptor {
        ws_path: format!("/sessions/{session_id}/ws"),
        session_id: session_id.clone(),
        interface: req.interface,
        task: req.task.clone(),
        created_at,
        config_name: req.config.clone(),
        tick_ms: state.config.tick_ms,
        input_delay_ms: state.config.input_delay_ms,
    };

    let config = Arc::new(config);
    let log_path = state.config.store.join("sessions").join(format!("{session_id}.jsonl"));
    let mut log = match std::fs::File::create(&log_path) {
        Ok(f) => BufWriter::new(f),
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    };
    let header = LogLine::Session {
        session_id: session_id.clone(),
        interface: req.interface,
        task: req.task,
        config: config.to_toml(),
    };
    write_line(&mut log, &header);

    let (frames, _) = broadcast::channel(FRAME_BUFFER);
    let (commands, inbox) = mpsc::channel(64);
    let engine = SessionEngine::new(config.clone(), req.interface, task);
    let actor = tokio::spawn(run_session(
        engine,
        inbox,
        frames.clone(),
        log,
        state.config.tick_ms,
        state.config.input_delay_ms,
    ));
    state.sessions.lock().await.insert(
        session_id,
        SessionHandle {
            descriptor: descriptor.clone(),
            config,
            frames,
            commands,
            actor,
        },
    );
    (StatusCode::CREATED, Json(descriptor)).into_response()
}

async fn list_sessions(State(state): State<Shared>) -> Json<Vec<SessionDescriptor>> {
    Json(state.sessions.lock().await.values().map(|h| h.descriptor.clone()).collect())
}

async fn delete_session(State(state): State<Shared>, UrlPath(id): UrlPath<String>) -> Response {
    let handle = state.sessions.lock().await.remove(&id);
    match handle {
        Some(h) => {
            close(h, "deleted").await;
            StatusCode::NO_CONTENT.into_response()
        }
        None => error(StatusCode::NOT_FOUND, format!("unknown session `{id}`")),
    }
}

async fn close(handle: SessionHandle, reason: &str) {
    let _ = handle.commands.send(Command::Close(reason.to_string())).await;
    let _ = handle.actor.await;
}

fn write_line(log: &mut BufWriter<std::fs::File>, line: &LogLine) {
    let text = serde_json::to_string(line).expect("log lines serialize");
    if let Err(e) = writeln!(log, "{text}") {
        tracing::warn!("session log write failed: {e}");
    }
}

/// The session's event loop; the engine never leaves it.
async fn run_session(
    mut engine: SessionEngine,
    mut inbox: mpsc::Receiver<Command>,
    frames: broadcast::Sender<Outbound>,
    mut log: BufWriter<std::fs::File>,
    tick_ms: u64,
    input_delay_ms: u64,
) {
    let start = Instant::now() + Duration::from_millis(input_delay_ms);
    let mut ticker = interval_at(start, Duration::from_millis(tick_ms));
    ticker.set_missed_tick_behavior(MissedTickBehavior::Burst);
    let mut k: u64 = 0;
    let reason = loop {
        tokio::select! {
            biased;
            cmd = inbox.recv() => match cmd {
                Some(Command::Input(msg, reply)) => {
                    write_line(&mut log, &LogLine::Input { msg: msg.clone() });
                    let _ = reply.send(engine.handle(&msg).map_err(|e| e.to_string()));
                }
                Some(Command::Close(reason)) => break reason,
                None => break "registry dropped".to_string(),
            },
            _ = ticker.tick() => {
                let t_ms = k * tick_ms;
                k += 1;
                write_line(&mut log, &LogLine::Tick { t_ms });
                let mut frame = engine.advance_to(t_ms);
                frame.wall_ms = Some(now_unix_ms());
                // no subscribers is fine
                let _ = frames.send(Outbound::State(Box::new(frame)));
            }
        }
    };
    if let Err(e) = log.flush() {
        tracing::warn!("session log flush failed: {e}");
    }
    let _ = frames.send(Outbound::Closed { reason });
}

async fn session_ws(State(state): State<Shared>, UrlPath(id): UrlPath<String>, ws: WebSocketUpgrade) -> Response {
    let attached = {
        let sessions = state.sessions.lock().await;
        sessions.get(&id).map(|h| {
            let hello = Outbound::Hello {
                session_id: id.clone(),
                interface: h.descriptor.interface,
                tick_ms: h.descriptor.tick_ms,
                input_delay_ms: h.descriptor.input_delay_ms,
                bindings: binding_table(&h.config.library),
            };
            (hello, h.frames.subscribe(), h.commands.clone())
        })
    };
    ws.on_upgrade(move |socket| async move {
        match attached {
            Some((hello, frames, commands)) => stream_session(socket, hello, frames, commands).await,
            None => {
                let mut socket = socket;
                let _ = send(&mut socket, &Outbound::Error {
                    reason: format!("unknown session `{id}`"),
                })
                .await;
                let _ = socket.send(Message::Close(None)).await;
            }
        }
    })
}

async fn send(socket: &mut WebSocket, msg: &Outbound) -> Result<(), axum::Error> {
    let text = serde_json::to_string(msg).expect("outbound messages serialize");
    socket.send(Message::Text(text.into())).await
}

async fn stream_session(
    mut socket: WebSocket,
    hello: Outbound,
    mut frames: broadcast::Receiver<Outbound>,
    commands: mpsc::Sender<Command>,
) {
    if send(&mut socket, &hello).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            frame = frames.recv() => match frame {
                Ok(msg) => {
                    let closed = matches!(msg, Outbound::Closed { .. });
                    if send(&mut socket, &msg).await.is_err() || closed {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => {
                    let _ = send(&mut socket, &Outbound::Closed { reason: "session ended".into() }).await;
                    break;
                }
            },
            incoming = socket.recv() => {
                let text = match incoming {
                    Some(Ok(Message::Text(text))) => text,
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                let reply = match serde_json::from_str::<Inbound>(text.as_str()) {
                    Err(e) => Outbound::Error { reason: format!("malformed message: {e}") },
                    Ok(msg) => {
                        let t_ms = msg.t_ms();
                        let (tx, rx) = oneshot::channel();
                        if commands.send(Command::Input(msg, tx)).await.is_err() {
                            Outbound::Error { reason: "session closed".into() }
                        } else {
                            match rx.await {
                                Ok(Ok(())) => Outbound::Ack { t_ms },
                                Ok(Err(reason)) => Outbound::Error { reason },
                                Err(_) => Outbound::Error { reason: "session closed".into() },
                            }
                        }
                    }
                };
                if send(&mut socket, &reply).await.is_err() {
                    break;
                }
            }
        }
    }
}
