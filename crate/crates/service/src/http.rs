//! HTTP transport: JSON commands plus a server-sent event stream per session.

use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde_json::json;
use tokio::sync::watch;

use crate::events::{Event, EventEnvelope};
use crate::session::{Action, SessionConfig, SessionService};
use crate::ServiceError;

/// How often the background task processes expired deadlines.
pub const TICK_INTERVAL: Duration = Duration::from_millis(250);

#[derive(Clone)]
pub struct AppState {
    service: Arc<SessionService>,
    changed: Arc<watch::Sender<u64>>,
}

impl AppState {
    pub fn new(service: Arc<SessionService>) -> Self {
        Self {
            service,
            changed: Arc::new(watch::channel(0).0),
        }
    }

    pub fn service(&self) -> &Arc<SessionService> {
        &self.service
    }

    fn notify(&self) {
        self.changed.send_modify(|n| *n += 1);
    }

    /// Processes deadlines in every session and wakes event streams.
    pub fn tick(&self) {
        if let Err(e) = self.service.tick_all() {
            eprintln!("tick failed: {e}");
        }
        self.notify();
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ServiceError::InvalidConfig(_) | ServiceError::Rejected(_) => StatusCode::BAD_REQUEST,
            ServiceError::Late { .. } | ServiceError::NotFinished => StatusCode::CONFLICT,
            ServiceError::Core(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({"error": self.to_string()}))).into_response()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/actions", post(submit_action))
        .route("/sessions/{id}/events", get(stream_events))
        .route("/sessions/{id}/export", get(export_session))
        .with_state(state)
}

async fn create_session(
    State(state): State<AppState>,
    Json(config): Json<SessionConfig>,
) -> Result<impl IntoResponse, ServiceError> {
    let id = state.service.create(config)?;
    let snapshot = state.service.snapshot(&id)?;
    state.notify();
    Ok((StatusCode::CREATED, Json(snapshot)))
}

async fn get_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(state.service.snapshot(&id)?))
}

async fn submit_action(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(action): Json<Action>,
) -> Result<impl IntoResponse, ServiceError> {
    let result = state.service.submit(&id, action);
    state.notify();
    Ok(Json(result?))
}

async fn export_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ServiceError> {
    let line = state.service.export(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], line))
}

fn sse_event(env: &EventEnvelope) -> SseEvent {
    SseEvent::default()
        .event(env.event.name())
        .id(env.seq.to_string())
        .json_data(env)
        .expect("events serialise")
}

/// Every event of the session from the start, then new ones as they occur.
/// The stream ends after `session_end`; an unknown session yields a single
/// `error` event.
async fn stream_events(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Sse<impl Stream<Item = Result<SseEvent, Infallible>>> {
    let rx = state.changed.subscribe();
    let init = (state, id, rx, 0usize, Vec::<EventEnvelope>::new(), false);
    let events = stream::unfold(init, |(state, id, mut rx, mut cursor, mut queue, mut finished)| async move {
        loop {
            if let Some(env) = (!queue.is_empty()).then(|| queue.remove(0)) {
                if matches!(env.event, Event::SessionEnd { .. }) {
                    finished = true;
                }
                let ev = sse_event(&env);
                return Some((Ok(ev), (state, id, rx, cursor, queue, finished)));
            }
            if finished {
                return None;
            }
            rx.borrow_and_update();
            match state.service.events(&id, cursor) {
                Ok(new) if !new.is_empty() => {
                    cursor += new.len();
                    queue = new;
                }
                Ok(_) => {
                    if rx.changed().await.is_err() {
                        return None;
                    }
                }
                Err(e) => {
                    let env = EventEnvelope {
                        seq: 0,
                        at_ms: state.service.now(),
                        event: Event::Error {
                            message: e.to_string(),
                        },
                    };
                    let ev = sse_event(&env);
                    return Some((Ok(ev), (state, id, rx, cursor, queue, true)));
                }
            }
        }
    });
    Sse::new(events).keep_alive(KeepAlive::default())
}

/// Serves `state` on `addr` until the process ends, ticking deadlines in the background.
pub async fn serve(state: AppState, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let ticker = state.clone();
    tokio::spawn(async move {
        let mut interval = tokio::time::interval(TICK_INTERVAL);
        loop {
            interval.tick().await;
            ticker.tick();
        }
    });
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
