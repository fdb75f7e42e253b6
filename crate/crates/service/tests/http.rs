use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use redist_core::players::VirtualPlayerModel;
use redist_service::clock::MockClock;
use redist_service::http::{router, AppState};
use redist_service::session::SessionService;

fn app() -> (MockClock, AppState) {
    let clock = MockClock::new();
    let svc = SessionService::new(
        Arc::new(clock.clone()),
        Some(Arc::new(VirtualPlayerModel::init(3))),
    );
    (clock, AppState::new(Arc::new(svc)))
}

async fn call(state: &AppState, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, String) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

fn session_body(humans: &[usize]) -> Value {
    json!({
        "profile": [10, 4, 4, 4],
        "mech_a": {"kind": "manifold", "v": 0.5, "w": 1.0},
        "mech_b": {"kind": "named", "name": "liberal_egalitarian"},
        "order": "a_first",
        "humans": humans,
        "seed": 3
    })
}

#[tokio::test]
async fn session_lifecycle_over_http() {
    let (_, state) = app();
    let (status, body) = call(&state, "POST", "/sessions", Some(session_body(&[0]))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let snap: Value = serde_json::from_str(&body).unwrap();
    let id = snap["id"].as_str().unwrap().to_string();
    assert_eq!(snap["screen"]["screen"], "contribute");
    assert_eq!(snap["seats"], json!(["human", "virtual", "virtual", "virtual"]));

    let (status, _) = call(&state, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);

    let (status, body) = call(
        &state,
        "POST",
        &format!("/sessions/{id}/actions"),
        Some(json!({"type": "contribute", "seat": 0, "coins": 11})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body.contains("between 0 and 10"), "{body}");

    let (status, _) = call(&state, "GET", &format!("/sessions/{id}/export"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);

    for _ in 0..30 {
        let (status, body) = call(
            &state,
            "POST",
            &format!("/sessions/{id}/actions"),
            Some(json!({"type": "contribute", "seat": 0, "coins": 5})),
        )
        .await;
        assert_eq!(status, StatusCode::OK, "{body}");
    }
    let (status, body) = call(
        &state,
        "POST",
        &format!("/sessions/{id}/actions"),
        Some(json!({"type": "vote", "seat": 0, "choice": "B"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    for _ in 0..4 {
        call(
            &state,
            "POST",
            &format!("/sessions/{id}/actions"),
            Some(json!({"type": "contribute", "seat": 0, "coins": 5})),
        )
        .await;
    }
    let (status, body) = call(&state, "GET", &format!("/sessions/{id}/export"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(body.ends_with('\n') && body.lines().count() == 1);
    let records = redist_core::game::read_jsonl(body.as_bytes()).unwrap();
    assert_eq!(records[0].votes[0], redist_core::game::Vote::B);
}

#[tokio::test]
async fn event_stream_replays_a_finished_session_and_ends() {
    let (_, state) = app();
    let (_, body) = call(&state, "POST", "/sessions", Some(session_body(&[]))).await;
    let id = serde_json::from_str::<Value>(&body).unwrap()["id"].as_str().unwrap().to_string();
    let (status, stream) = call(&state, "GET", &format!("/sessions/{id}/events"), None).await;
    assert_eq!(status, StatusCode::OK);
    let names: Vec<&str> = stream
        .lines()
        .filter_map(|l| l.strip_prefix("event: "))
        .collect();
    assert_eq!(names.first(), Some(&"session_start"));
    assert_eq!(names.last(), Some(&"session_end"));
    assert_eq!(names.iter().filter(|n| **n == "round_result").count(), 34);
    assert_eq!(names.iter().filter(|n| **n == "round_open").count(), 34);
    let data: Vec<Value> = stream
        .lines()
        .filter_map(|l| l.strip_prefix("data: "))
        .map(|d| serde_json::from_str(d).unwrap())
        .collect();
    assert_eq!(data.len(), names.len());
    for (k, d) in data.iter().enumerate() {
        assert_eq!(d["seq"], json!(k));
        assert_eq!(d["type"], json!(names[k]));
    }
}

#[tokio::test]
async fn event_stream_delivers_live_events() {
    let (_, state) = app();
    let (_, body) = call(&state, "POST", "/sessions", Some(session_body(&[1]))).await;
    let id = serde_json::from_str::<Value>(&body).unwrap()["id"].as_str().unwrap().to_string();
    let req = Request::builder()
        .uri(format!("/sessions/{id}/events"))
        .body(Body::empty())
        .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let mut body = resp.into_body();
    let mut seen = String::new();
    let mut submitted = false;
    while !seen.contains("event: round_result") {
        let frame = tokio::time::timeout(std::time::Duration::from_secs(5), body.frame())
            .await
            .expect("event arrives")
            .unwrap()
            .unwrap();
        if let Some(d) = frame.data_ref() {
            seen.push_str(std::str::from_utf8(d).unwrap());
        }
        if seen.contains("event: round_open") && !submitted {
            submitted = true;
            let (status, _) = call(
                &state,
                "POST",
                &format!("/sessions/{id}/actions"),
                Some(json!({"type": "contribute", "seat": 1, "coins": 2})),
            )
            .await;
            assert_eq!(status, StatusCode::OK);
        }
    }
    assert!(submitted);
}

#[tokio::test]
async fn unknown_sessions_and_bad_requests() {
    let (_, state) = app();
    let (status, _) = call(&state, "GET", "/sessions/zzz", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, body) = call(&state, "GET", "/sessions/zzz/events", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(body.contains("event: error"), "{body}");
    assert!(body.contains("unknown session"), "{body}");

    let mut bad = session_body(&[]);
    bad["profile"] = json!([5, 5, 5, 5]);
    let (status, _) = call(&state, "POST", "/sessions", Some(bad)).await;
    assert!(status.is_client_error());
    let (status, _) = call(&state, "POST", "/sessions", Some(session_body(&[9]))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn background_tick_applies_deadlines() {
    let (clock, state) = app();
    let (_, body) = call(&state, "POST", "/sessions", Some(session_body(&[0]))).await;
    let id = serde_json::from_str::<Value>(&body).unwrap()["id"].as_str().unwrap().to_string();
    clock.advance(redist_service::session::ACTION_DEADLINE_MS);
    state.tick();
    let snap = state.service().snapshot(&id).unwrap();
    assert_eq!(snap.strikes, [1, 0, 0, 0]);
}
