//! HTTP service for live play sessions and prediction games.
//!
//! | method | path | body | response |
//! |---|---|---|---|
//! | GET | `/health` | | `{"status":"ok","sessions":n}` |
//! | POST | `/sessions` | `{"seed":u64,"script":name?,"participant":str?}` | `PlayView` (201) |
//! | GET | `/sessions/{id}` | | `PlayView` |
//! | POST | `/sessions/{id}/actions` | `{"action":"Up"}` | `PlayView` |
//! | GET | `/sessions/{id}/prediction` | | `PredictionView` or `null` |
//! | GET | `/sessions/{id}/trajectory` | | canonical trajectory file |
//! | GET | `/sessions/{id}/events` | | event stream, one `step` event per action |
//! | GET | `/games/trajectories` | | `["id", ...]` |
//! | POST | `/games` | `{"trajectory":"id"}` | `GameView` (201) |
//! | GET | `/games/{id}` | | `GameView` |
//! | POST | `/games/{id}/guesses` | `{"guesses":["Up",...]}` | `GameScore` |
//! | GET | `/games/aggregate` | | `GameAggregate` |
//!
//! Errors are `{"error": message}` with 404 for unknown ids and 400 for
//! malformed input.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde::Deserialize;
use tokio::sync::broadcast;

use rote::session::{parse_action, CreatePlay, PlayView, SessionError, SessionManager};

/// Events buffered per subscriber before slow readers start skipping.
const EVENT_BUFFER: usize = 64;

#[derive(Clone)]
pub struct AppState {
    manager: Arc<SessionManager>,
    channels: Arc<Mutex<HashMap<String, broadcast::Sender<PlayView>>>>,
}

impl AppState {
    pub fn new(manager: SessionManager) -> Self {
        AppState { manager: Arc::new(manager), channels: Arc::default() }
    }

    pub fn manager(&self) -> &SessionManager {
        &self.manager
    }

    fn channel(&self, id: &str) -> broadcast::Sender<PlayView> {
        let mut map = self.channels.lock().expect("channel map");
        map.entry(id.to_string()).or_insert_with(|| broadcast::channel(EVENT_BUFFER).0).clone()
    }
}

pub struct ApiError(StatusCode, String);

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match e {
            SessionError::NotFound(_) | SessionError::UnknownTrajectory(_) => StatusCode::NOT_FOUND,
            SessionError::AlreadyScored(_) => StatusCode::CONFLICT,
            SessionError::Infer(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError(status, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(StatusCode::BAD_REQUEST, e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Deserialize)]
struct ActBody {
    action: String,
}

#[derive(Deserialize)]
struct GameBody {
    trajectory: String,
}

#[derive(Deserialize)]
struct GuessBody {
    guesses: Vec<String>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_view))
        .route("/sessions/{id}/actions", post(act))
        .route("/sessions/{id}/prediction", get(prediction))
        .route("/sessions/{id}/trajectory", get(export))
        .route("/sessions/{id}/events", get(events))
        .route("/games", post(create_game))
        .route("/games/trajectories", get(game_trajectories))
        .route("/games/aggregate", get(aggregate))
        .route("/games/{id}", get(game_view))
        .route("/games/{id}/guesses", post(guess))
        .with_state(state)
}

/// Serves `state` on `addr` until the process is stopped.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

async fn health(State(s): State<AppState>) -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok", "sessions": s.manager.session_count() }))
}

async fn create_session(
    State(s): State<AppState>,
    body: Result<Json<CreatePlay>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<PlayView>)> {
    let Json(req) = body?;
    Ok((StatusCode::CREATED, Json(s.manager.create_play(&req))))
}

async fn session_view(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<PlayView>> {
    Ok(Json(s.manager.play_view(&id)?))
}

async fn act(
    State(s): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<ActBody>, JsonRejection>,
) -> ApiResult<Json<PlayView>> {
    let Json(body) = body?;
    let action = parse_action(&body.action)?;
    // Refits may wait on a remote backend.
    let manager = s.manager.clone();
    let key = id.clone();
    let view = tokio::task::spawn_blocking(move || manager.act(&key, action))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    // No subscribers is fine.
    let _ = s.channel(&id).send(view.clone());
    Ok(Json(view))
}

async fn prediction(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    let view = s.manager.play_view(&id)?;
    Ok(Json(serde_json::to_value(view.prediction).expect("prediction serializes")))
}

async fn export(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let t = s.manager.export(&id)?;
    let text = t.to_text().map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let disposition = format!("attachment; filename=\"{id}.json\"");
    Ok(([(header::CONTENT_TYPE, "application/json".to_string()), (header::CONTENT_DISPOSITION, disposition)], text)
        .into_response())
}

/// Sends the current state first, then one `step` event per action.
async fn events(
    State(s): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, std::convert::Infallible>>>> {
    let rx = s.channel(&id).subscribe();
    let current = s.manager.play_view(&id)?;
    let first = stream::once(async move { Ok(step_event(&current)) });
    let rest = stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(view) => return Some((Ok(step_event(&view)), rx)),
                Err(broadcast::error::RecvError::Lagged(n)) => log::debug!("event subscriber skipped {n}"),
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Ok(Sse::new(futures::StreamExt::chain(first, rest)).keep_alive(KeepAlive::default()))
}

fn step_event(view: &PlayView) -> Event {
    Event::default().event("step").json_data(view).expect("views serialize")
}

async fn game_trajectories(State(s): State<AppState>) -> Json<Vec<String>> {
    Json(s.manager.stored_ids())
}

async fn create_game(
    State(s): State<AppState>,
    body: Result<Json<GameBody>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<rote::session::GameView>)> {
    let Json(body) = body?;
    Ok((StatusCode::CREATED, Json(s.manager.create_game(&body.trajectory)?)))
}

async fn game_view(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<rote::session::GameView>> {
    Ok(Json(s.manager.game_view(&id)?))
}

async fn guess(
    State(s): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<GuessBody>, JsonRejection>,
) -> ApiResult<Json<rote::session::GameScore>> {
    let Json(body) = body?;
    let guesses = body.guesses.iter().map(|g| parse_action(g)).collect::<Result<Vec<_>, _>>()?;
    Ok(Json(s.manager.guess(&id, &guesses)?))
}

async fn aggregate(State(s): State<AppState>) -> Json<rote::session::GameAggregate> {
    Json(s.manager.aggregate())
}
