//! HTTP host: `/session` upgrades to a WebSocket running one [`Session`],
//! `/healthz` reports the version and the number of live sessions.

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};
use tokio::net::TcpListener;
use tokio::time::Instant;

use cftamer::envs::Norms;
use cftamer::experiment::{training_run, ExperimentConfig};

use crate::protocol::{parse_client, ServerMessage};
use crate::session::Session;
use crate::SessionError;

/// What every new session is built from.
#[derive(Debug, Clone)]
pub struct ServeSettings {
    pub experiment: ExperimentConfig,
    pub norms: Norms,
    pub data_dir: PathBuf,
}

impl ServeSettings {
    pub fn new(experiment: ExperimentConfig, norms: Norms) -> Self {
        let data_dir = experiment.serve.data_dir.clone();
        ServeSettings {
            experiment,
            norms,
            data_dir,
        }
    }

    pub fn new_session(&self, id: String) -> Result<Session, SessionError> {
        let serve = &self.experiment.serve;
        let run = training_run(&self.experiment, self.norms, serve.variant, serve.seed)
            .map_err(|e| SessionError::Setup(e.to_string()))?;
        Ok(Session::new(id, run, serve.feedback_timeout_ms, serve.eval_interval))
    }
}

pub struct AppState {
    settings: ServeSettings,
    live: Mutex<HashSet<String>>,
    counter: AtomicU64,
    started: u64,
}

impl AppState {
    pub fn new(settings: ServeSettings) -> Arc<Self> {
        let started = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        Arc::new(AppState {
            settings,
            live: Mutex::new(HashSet::new()),
            counter: AtomicU64::new(0),
            started,
        })
    }

    pub fn live_sessions(&self) -> usize {
        self.live.lock().expect("session set lock").len()
    }

    fn fresh_id(&self) -> String {
        format!("{:x}-{}", self.started, self.counter.fetch_add(1, Ordering::Relaxed))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
    pub sessions: usize,
}

#[derive(Debug, Deserialize)]
pub struct SessionQuery {
    /// Resume (or create) the session with this id.
    pub id: Option<String>,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/session", get(session_upgrade))
        .with_state(state)
}

async fn healthz(State(state): State<Arc<AppState>>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: cftamer::VERSION.into(),
        sessions: state.live_sessions(),
    })
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

async fn session_upgrade(
    ws: WebSocketUpgrade,
    Query(q): Query<SessionQuery>,
    State(state): State<Arc<AppState>>,
) -> Response {
    let id = match q.id {
        Some(id) if !valid_id(&id) => {
            return (axum::http::StatusCode::BAD_REQUEST, "invalid session id").into_response()
        }
        Some(id) => id,
        None => state.fresh_id(),
    };
    if !state.live.lock().expect("session set lock").insert(id.clone()) {
        return (axum::http::StatusCode::CONFLICT, "session already connected").into_response();
    }
    ws.on_upgrade(move |socket| async move {
        let dir = state.settings.data_dir.clone();
        let loaded = if Session::snapshot_path(&dir, &id).exists() {
            Session::load(&dir, &id)
        } else {
            state.settings.new_session(id.clone())
        };
        match loaded {
            Ok(session) => run_socket(socket, session, &dir).await,
            Err(e) => {
                log::error!("session {id}: {e}");
                let mut socket = socket;
                let _ = socket
                    .send(Message::Text(ServerMessage::error(e.to_string()).to_json().into()))
                    .await;
            }
        }
        state.live.lock().expect("session set lock").remove(&id);
    })
}

async fn send_all(socket: &mut WebSocket, msgs: Vec<ServerMessage>) -> bool {
    for m in msgs {
        if socket.send(Message::Text(m.to_json().into())).await.is_err() {
            return false;
        }
    }
    true
}

/// One session's loop: strictly sequential, nothing shared with others.
async fn run_socket(mut socket: WebSocket, mut session: Session, dir: &std::path::Path) {
    let mut connected = send_all(&mut socket, session.connect()).await;
    let mut armed: Option<(u64, Instant)> = None;
    while connected && session.phase() != crate::protocol::Phase::Ended {
        // (Re)arm the feedback timer whenever a new pair is awaited.
        match (session.awaiting_step(), armed) {
            (Some(step), Some((s, _))) if s == step => {}
            (Some(step), _) => {
                let wait = Duration::from_millis(session.feedback_timeout_ms());
                armed = Some((step, Instant::now() + wait));
            }
            (None, _) => armed = None,
        }
        let deadline = armed.map(|(_, at)| at);
        let incoming = tokio::select! {
            msg = socket.recv() => Some(msg),
            _ = sleep_until(deadline) => None,
        };
        let out = match incoming {
            None => {
                let (step, _) = armed.take().expect("timer armed");
                session.timeout(step)
            }
            Some(Some(Ok(Message::Text(text)))) => match parse_client(text.as_str()) {
                Ok(msg) => {
                    let speed_change = matches!(msg, crate::protocol::ClientMessage::SetSpeed(_));
                    let out = session.handle(msg);
                    if speed_change || out.iter().any(|m| matches!(m, ServerMessage::AwaitingFeedback(_))) {
                        armed = None;
                    }
                    out
                }
                Err(reason) => vec![ServerMessage::error(reason)],
            },
            Some(Some(Ok(Message::Binary(_)))) => vec![ServerMessage::error("frames must be UTF-8 text")],
            Some(Some(Ok(_))) => Vec::new(),
            Some(Some(Err(_))) | Some(None) => {
                connected = false;
                Vec::new()
            }
        };
        if connected {
            connected = send_all(&mut socket, out).await;
        }
    }
    session.disconnect();
    match session.save(dir) {
        Ok(path) => log::info!("session {} saved to {}", session.id(), path.display()),
        Err(e) => log::error!("session {}: {e}", session.id()),
    }
    let _ = socket.send(Message::Close(None)).await;
}

async fn sleep_until(deadline: Option<Instant>) {
    match deadline {
        Some(at) => tokio::time::sleep_until(at).await,
        None => std::future::pending().await,
    }
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    settings: ServeSettings,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let app = router(AppState::new(settings));
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}
