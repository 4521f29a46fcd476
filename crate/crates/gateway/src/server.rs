//! HTTP + WebSocket front end. Each session lives on a dedicated thread and
//! takes commands through a queue, so a slow render never blocks the runtime.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::ws::rejection::WebSocketUpgradeRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use thermoact::sim::TASKS;
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc, oneshot};

use crate::protocol::ServerMessage;
use crate::session::Session;
use crate::PROTOCOL_VERSION;

/// Close code sent when a client asks for a session that does not exist.
pub const CLOSE_UNKNOWN_SESSION: u16 = 4404;

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub task: u8,
    pub seed: u64,
    pub data_root: PathBuf,
}

enum Request {
    Hello(oneshot::Sender<ServerMessage>),
    Command(String, oneshot::Sender<ServerMessage>),
}

#[derive(Clone)]
struct SessionHandle {
    commands: mpsc::Sender<Request>,
    stream: broadcast::Sender<Arc<str>>,
}

pub struct AppState {
    config: GatewayConfig,
    sessions: Mutex<HashMap<String, SessionHandle>>,
    counter: AtomicU64,
}

impl AppState {
    pub fn new(config: GatewayConfig) -> Arc<Self> {
        Arc::new(Self {
            config,
            sessions: Mutex::new(HashMap::new()),
            counter: AtomicU64::new(1),
        })
    }

    fn spawn_session(&self, task: u8, seed: u64) -> Result<String, String> {
        let id = format!("s{}", self.counter.fetch_add(1, Ordering::Relaxed));
        let mut session =
            Session::new(id.clone(), task, seed, self.config.data_root.clone()).map_err(|e| e.to_string())?;
        let (tx, mut rx) = mpsc::channel::<Request>(64);
        let (stream, _) = broadcast::channel::<Arc<str>>(256);
        let out = stream.clone();
        std::thread::Builder::new()
            .name(format!("session-{id}"))
            .spawn(move || {
                while let Some(req) = rx.blocking_recv() {
                    match req {
                        Request::Hello(reply) => {
                            let _ = reply.send(session.hello());
                        }
                        Request::Command(text, reply) => {
                            let (msg, extra) = session.apply(&text, out.receiver_count() > 0);
                            let _ = reply.send(msg);
                            for m in extra {
                                let _ = out.send(m.to_json().into());
                            }
                        }
                    }
                }
            })
            .map_err(|e| e.to_string())?;
        self.sessions.lock().unwrap().insert(
            id.clone(),
            SessionHandle {
                commands: tx,
                stream,
            },
        );
        Ok(id)
    }

    fn session(&self, id: &str) -> Option<SessionHandle> {
        self.sessions.lock().unwrap().get(id).cloned()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/tasks", get(tasks))
        .route("/session", post(create_session))
        .route("/ws/{id}", get(ws))
        .with_state(state)
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
        "protocol": PROTOCOL_VERSION,
    }))
}

async fn tasks() -> Json<serde_json::Value> {
    Json(json!(TASKS))
}

#[derive(Debug, Default, Deserialize)]
struct NewSession {
    task: Option<u8>,
    seed: Option<u64>,
}

async fn create_session(State(state): State<Arc<AppState>>, body: Option<Json<NewSession>>) -> Response {
    let req = body.map(|b| b.0).unwrap_or_default();
    let task = req.task.unwrap_or(state.config.task);
    let seed = req.seed.unwrap_or(state.config.seed);
    let st = state.clone();
    match tokio::task::spawn_blocking(move || st.spawn_session(task, seed)).await {
        Ok(Ok(id)) => Json(json!({"session": id, "task": task, "seed": seed})).into_response(),
        Ok(Err(e)) => (StatusCode::BAD_REQUEST, Json(json!({"error": e}))).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({"error": e.to_string()}))).into_response(),
    }
}

async fn ws(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    upgrade: Result<WebSocketUpgrade, WebSocketUpgradeRejection>,
) -> Response {
    let handle = state.session(&id);
    match (upgrade, handle) {
        (Ok(up), Some(h)) => up.on_upgrade(move |socket| client_loop(socket, h)),
        (Ok(up), None) => up.on_upgrade(move |mut socket| async move {
            let msg = ServerMessage::error(None, format!("unknown session {id}"));
            let _ = socket.send(Message::Text(msg.to_json().into())).await;
            let _ = socket
                .send(Message::Close(Some(CloseFrame {
                    code: CLOSE_UNKNOWN_SESSION,
                    reason: "unknown session".into(),
                })))
                .await;
        }),
        (Err(e), Some(_)) => e.into_response(),
        (Err(_), None) => (StatusCode::NOT_FOUND, format!("unknown session {id}")).into_response(),
    }
}

async fn ask(handle: &SessionHandle, req: impl FnOnce(oneshot::Sender<ServerMessage>) -> Request) -> Option<ServerMessage> {
    let (tx, rx) = oneshot::channel();
    handle.commands.send(req(tx)).await.ok()?;
    rx.await.ok()
}

async fn client_loop(mut socket: WebSocket, handle: SessionHandle) {
    // Subscribe first so frames produced by this client's own commands are not missed.
    let mut frames = handle.stream.subscribe();
    let Some(hello) = ask(&handle, Request::Hello).await else {
        return;
    };
    if socket.send(Message::Text(hello.to_json().into())).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            incoming = socket.recv() => {
                let text = match incoming {
                    Some(Ok(Message::Text(t))) => t.to_string(),
                    Some(Ok(Message::Binary(_))) => {
                        let m = ServerMessage::error(None, "binary messages are not supported");
                        if socket.send(Message::Text(m.to_json().into())).await.is_err() {
                            return;
                        }
                        continue;
                    }
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                    Some(Ok(_)) => continue,
                };
                let Some(reply) = ask(&handle, |tx| Request::Command(text, tx)).await else {
                    return;
                };
                if socket.send(Message::Text(reply.to_json().into())).await.is_err() {
                    return;
                }
            }
            streamed = frames.recv() => match streamed {
                Ok(m) => {
                    if socket.send(Message::Text(m.to_string().into())).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return,
            },
        }
    }
}

/// Starts a session for the configured task so clients can connect to `s1`
/// without a POST first.
pub fn default_session(state: &AppState) -> Result<String, String> {
    state.spawn_session(state.config.task, state.config.seed)
}

/// Opens the default session and serves until the listener fails.
pub async fn serve(listener: TcpListener, config: GatewayConfig) -> std::io::Result<()> {
    let state = AppState::new(config);
    let st = state.clone();
    tokio::task::spawn_blocking(move || default_session(&st))
        .await
        .map_err(std::io::Error::other)?
        .map_err(std::io::Error::other)?;
    axum::serve(listener, router(state)).await
}
