use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use futures::StreamExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use rote::agents::dataset::{generate_one, DatasetSpec};
use rote::agents::ScriptId;
use rote::dsl::library;
use rote::infer::{InferenceConfig, Rote};
use rote::session::SessionManager;
use rote::synth::MockSynthesizer;
use rote::trajectory::Trajectory;
use rote_server::{router, AppState};

fn app() -> (Router, Trajectory) {
    let stored = generate_one(&DatasetSpec::new(11), ScriptId::SnakePatrol, 0);
    let engine = Rote::new(Arc::new(MockSynthesizer::new(library::standard(), 1)), InferenceConfig::default());
    let state = AppState::new(SessionManager::new(engine, vec![stored.clone()]));
    (router(state), stored)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, String) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or_else(Body::empty, |b| Body::from(b.to_string()))).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, text) = call(app, method, uri, body).await;
    (status, serde_json::from_str(&text).unwrap_or(Value::Null))
}

#[tokio::test]
async fn play_thirty_steps_and_export() {
    let (app, _) = app();
    let (status, v) = call_json(&app, "POST", "/sessions", Some(json!({"seed": 4, "script": "up_down_patrol"}))).await;
    assert_eq!(status, StatusCode::CREATED);
    let id = v["id"].as_str().unwrap().to_string();
    for i in 0..30 {
        let action = if i % 2 == 0 { "Up" } else { "down" };
        let (status, v) = call_json(&app, "POST", &format!("/sessions/{id}/actions"), Some(json!({"action": action}))).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(v["step"], i + 1);
        assert!(v["prediction"]["action"].is_string());
    }
    let (status, p) = call_json(&app, "GET", &format!("/sessions/{id}/prediction"), None).await;
    assert_eq!(status, StatusCode::OK);
    let total: f64 = p["probabilities"].as_object().unwrap().values().map(|x| x.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);

    let (status, text) = call(&app, "GET", &format!("/sessions/{id}/trajectory"), None).await;
    assert_eq!(status, StatusCode::OK);
    let t = Trajectory::from_text(&text).unwrap();
    assert_eq!(t.len(), 30);
    assert_eq!(t.replayed().unwrap(), t);
}

#[tokio::test]
async fn refresh_restores_state() {
    let (app, _) = app();
    let (_, v) = call_json(&app, "POST", "/sessions", Some(json!({"seed": 2}))).await;
    let id = v["id"].as_str().unwrap();
    let (_, after) = call_json(&app, "POST", &format!("/sessions/{id}/actions"), Some(json!({"action": "Left"}))).await;
    let (_, fetched) = call_json(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(after, fetched);
}

#[tokio::test]
async fn errors_map_to_status_codes() {
    let (app, _) = app();
    let (status, v) = call_json(&app, "GET", "/sessions/p424242", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(v["error"].as_str().unwrap().contains("p424242"));

    let (_, v) = call_json(&app, "POST", "/sessions", Some(json!({"seed": 1}))).await;
    let id = v["id"].as_str().unwrap();
    let (status, v) = call_json(&app, "POST", &format!("/sessions/{id}/actions"), Some(json!({"action": "jump"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("jump"));
    let (status, _) = call_json(&app, "POST", &format!("/sessions/{id}/actions"), Some(json!({"move": 3}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call_json(&app, "POST", "/games", Some(json!({"trajectory": "missing"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn game_scores_and_aggregates() {
    let (app, stored) = app();
    let (_, ids) = call_json(&app, "GET", "/games/trajectories", None).await;
    assert_eq!(ids, json!([stored.meta.id]));
    let (status, g) = call_json(&app, "POST", "/games", Some(json!({"trajectory": stored.meta.id}))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(g["actions"].as_array().unwrap().len(), 20);
    let id = g["id"].as_str().unwrap();

    // Three right, two wrong.
    let truth = &stored.actions()[20..25];
    let mut guesses: Vec<String> = truth.iter().map(|a| a.name().to_string()).collect();
    for i in [1, 3] {
        guesses[i] = if truth[i] == rote::grid::Action::Noop { "Interact" } else { "Noop" }.into();
    }
    let (status, s) = call_json(&app, "POST", &format!("/games/{id}/guesses"), Some(json!({"guesses": guesses}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(s["accuracy"], 0.6);
    let (status, _) = call_json(&app, "POST", &format!("/games/{id}/guesses"), Some(json!({"guesses": guesses}))).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (_, agg) = call_json(&app, "GET", "/games/aggregate", None).await;
    assert_eq!(agg["n"], 1);
    assert_eq!(agg["mean"], 0.6);
    assert_eq!(agg["by_script"]["snake_patrol"]["n"], 1);
}

#[tokio::test]
async fn event_stream_pushes_each_step() {
    let (app, _) = app();
    let (_, v) = call_json(&app, "POST", "/sessions", Some(json!({"seed": 8}))).await;
    let id = v["id"].as_str().unwrap().to_string();

    let req = Request::builder().uri(format!("/sessions/{id}/events")).body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["content-type"], "text/event-stream");
    let mut frames = resp.into_body().into_data_stream();

    let first = String::from_utf8(frames.next().await.unwrap().unwrap().to_vec()).unwrap();
    assert!(first.starts_with("event: step"));
    assert!(first.contains("\"step\":0"));

    call_json(&app, "POST", &format!("/sessions/{id}/actions"), Some(json!({"action": "Right"}))).await;
    let second = String::from_utf8(frames.next().await.unwrap().unwrap().to_vec()).unwrap();
    assert!(second.contains("\"step\":1"));
    assert!(second.contains("\"prediction\":{"));
}

#[tokio::test]
async fn concurrent_sessions_stay_isolated() {
    let (app, _) = app();
    let mut ids = Vec::new();
    for seed in 0..4 {
        let (_, v) = call_json(&app, "POST", "/sessions", Some(json!({"seed": seed}))).await;
        ids.push(v["id"].as_str().unwrap().to_string());
    }
    let actions = ["Up", "Down", "Left", "Right"];
    let tasks: Vec<_> = ids
        .iter()
        .zip(actions)
        .map(|(id, a)| {
            let app = app.clone();
            let id = id.clone();
            tokio::spawn(async move {
                for _ in 0..5 {
                    call_json(&app, "POST", &format!("/sessions/{id}/actions"), Some(json!({"action": a}))).await;
                }
            })
        })
        .collect();
    for t in tasks {
        t.await.unwrap();
    }
    for (id, a) in ids.iter().zip(actions) {
        let (_, v) = call_json(&app, "GET", &format!("/sessions/{id}"), None).await;
        assert_eq!(v["actions"], json!(vec![a; 5]));
    }
}
