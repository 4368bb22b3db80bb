use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use mci_core::fixtures::ScenarioBuilder;
use mci_core::{Scenario, SeverityCode};
use mci_service::{router, AppState, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

fn app() -> (AppState, Router) {
    let state = AppState::new(ServiceConfig { default_pacing: 0.0, ..ServiceConfig::default() }).unwrap();
    (state.clone(), router(state))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or_else(Body::empty, |b| Body::from(b.to_string()))).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn create(app: &Router, body: Value) -> String {
    let (status, v) = call(app, "POST", "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

async fn command(app: &Router, id: &str, body: Value) -> (StatusCode, Value) {
    call(app, "POST", &format!("/sessions/{id}/commands"), Some(body)).await
}

/// One emergency bed shared by two visible critical patients.
fn contested() -> Scenario {
    ScenarioBuilder::new()
        .patient(SeverityCode::Critical, [1, 1, 0, 0, 0, 0, 0, 0], 0)
        .patient(SeverityCode::Critical, [1, 1, 0, 0, 0, 0, 0, 0], 0)
        .hospital(1, [1, 1, 1, 0, 0, 0, 0, 0], 10)
        .hospital(3, [1, 0, 0, 0, 0, 0, 0, 0], 40)
        .build()
}

#[tokio::test]
async fn standard_session_has_twenty_patients() {
    let (_, app) = app();
    let (status, v) =
        call(&app, "POST", "/sessions", Some(json!({"scenario_id": "standard", "mode": "human_plus_ai"}))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(v["patients"], 20);
    assert_eq!(v["mode"], "human_plus_ai");
    let (_, list) = call(&app, "GET", "/scenarios", None).await;
    let ids: Vec<&str> = list.as_array().unwrap().iter().map(|s| s["scenario_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["complex", "standard"]);
}

#[tokio::test]
async fn creation_errors_are_machine_readable() {
    let (_, app) = app();
    let (status, v) = call(&app, "POST", "/sessions", Some(json!({"scenario_id": "standard", "mode": "autopilot"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "validation_error");
    assert!(v["reason"].as_str().unwrap().contains("autopilot"));

    let (status, v) = call(&app, "POST", "/sessions", Some(json!({"scenario_id": "nowhere", "mode": "human_only"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "not_found");

    let (status, v) = call(&app, "POST", "/sessions", Some(json!({"scenario_id": "standard", "mode": "ai_only", "policy": "learned"}))).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("validation_error")));

    let (status, _) = command(&app, "s999999", json!({"command": "start"})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn scenarios_can_be_added() {
    let (_, app) = app();
    let (status, v) = call(&app, "POST", "/scenarios", Some(json!({"preset": "standard", "seed": 3}))).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    assert_eq!(v["scenario_id"], "standard-3");
    let (status, v) = call(&app, "POST", "/scenarios", Some(json!({"generate": {"patient_count": 12, "seed": 5, "scenario_id": "g"}}))).await;
    assert_eq!((status, v["patients"].as_u64()), (StatusCode::CREATED, Some(12)));
    let (status, v) = call(&app, "POST", "/scenarios", Some(json!({"scenario": contested()}))).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    let (status, v) = call(&app, "POST", "/scenarios", Some(json!({"scenario": contested()}))).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("validation_error")));
    let (status, v) = call(&app, "GET", "/scenarios/g", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["patients"].as_array().unwrap().len(), 12);
}

#[tokio::test]
async fn mode_violations() {
    let (_, app) = app();
    let human = create(&app, json!({"scenario": contested(), "mode": "human_only"})).await;
    let (status, v) = command(&app, &human, json!({"command": "request_suggestion", "patient": 1})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["code"], "mode_violation");

    let ai = create(&app, json!({"scenario": contested(), "mode": "ai_only"})).await;
    for cmd in [json!({"command": "assign", "patient": 1, "hospital": 1}), json!({"command": "cancel", "patient": 1})] {
        let (status, v) = command(&app, &ai, cmd).await;
        assert_eq!((status, v["code"].as_str()), (StatusCode::CONFLICT, Some("mode_violation")));
    }
}

#[tokio::test]
async fn engine_rejections_pass_through() {
    let (_, app) = app();
    let id = create(&app, json!({"scenario": contested(), "mode": "human_only"})).await;
    let (status, _) = command(&app, &id, json!({"command": "assign", "patient": 1, "hospital": 1})).await;
    assert_eq!(status, StatusCode::OK);
    let (status, v) = command(&app, &id, json!({"command": "assign", "patient": 2, "hospital": 1})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v, json!({"code": "rejected", "reason": "no_emergency_capacity"}));
    let (status, v) = command(&app, &id, json!({"command": "teleport"})).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("validation_error")));
}

#[tokio::test]
async fn stale_suggestion_is_rejected_on_accept() {
    let (_, app) = app();
    let id = create(&app, json!({"scenario": contested(), "mode": "human_plus_ai"})).await;
    let (status, v) = command(&app, &id, json!({"command": "request_suggestion", "patient": 2})).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let suggestion = &v["suggestion"];
    assert_eq!(suggestion["hospital_id"], 1);
    let rationale = &suggestion["rationale"];
    assert_eq!(rationale["travel_min"], 10);
    assert!(rationale["projected_reward"].as_f64().unwrap() > 0.0);
    assert_eq!(v["events"][0]["kind"], "suggestion_issued");
    let sid = suggestion["suggestion_id"].as_u64().unwrap();

    // A manual assignment takes the only bed first.
    command(&app, &id, json!({"command": "assign", "patient": 1, "hospital": 1})).await;
    let (status, v) = command(&app, &id, json!({"command": "accept_suggestion", "suggestion_id": sid})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["reason"], "no_emergency_capacity");

    let (_, state) = call(&app, "GET", &format!("/sessions/{id}/state"), None).await;
    assert_eq!(state["suggestions"][0]["status"], "stale");
    let bed = &state["hospitals"][0];
    assert_eq!(bed["reserved"][1], 1);
    assert_eq!(bed["effective"][1], 1);
}

#[tokio::test]
async fn decline_is_logged() {
    let (_, app) = app();
    let id = create(&app, json!({"scenario": contested(), "mode": "human_plus_ai"})).await;
    let (_, v) = command(&app, &id, json!({"command": "request_suggestion", "patient": 1})).await;
    let sid = v["suggestion"]["suggestion_id"].as_u64().unwrap();
    let (status, v) = command(&app, &id, json!({"command": "decline_suggestion", "suggestion_id": sid})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["events"][0]["kind"], "suggestion_declined");
    let (status, v) = command(&app, &id, json!({"command": "accept_suggestion", "suggestion_id": 99})).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));
}

#[tokio::test]
async fn end_produces_report_and_archive() {
    let (_, app) = app();
    let id = create(&app, json!({"scenario": contested(), "mode": "human_only"})).await;
    command(&app, &id, json!({"command": "start"})).await;
    command(&app, &id, json!({"command": "assign", "patient": 1, "hospital": 1})).await;
    command(&app, &id, json!({"command": "step", "dt": 3})).await;
    let (status, v) = command(&app, &id, json!({"command": "end"})).await;
    assert_eq!(status, StatusCode::OK);
    assert!(v["terminal"].as_bool().unwrap());
    assert_eq!(v["events"].as_array().unwrap().last().unwrap()["kind"], "session_ended");

    let (_, state) = call(&app, "GET", &format!("/sessions/{id}/state"), None).await;
    assert_eq!(state["report"]["completion_basis"], "wall_clock_seconds");
    assert_eq!(state["report"]["total_patients"], 2);

    let (status, loaded) = call(&app, "GET", &format!("/archives/{id}"), None).await;
    assert_eq!(status, StatusCode::OK, "{loaded}");
    assert_eq!(loaded["archive"]["events"].as_array().unwrap().len() as u64, state["next_seq"].as_u64().unwrap());
    assert_eq!(loaded["replayed_events"].as_u64().unwrap(), state["next_seq"].as_u64().unwrap());
    assert_eq!(loaded["archive"]["report"], state["report"]);

    let (status, v) = command(&app, &id, json!({"command": "step"})).await;
    assert_eq!((status, v["reason"].as_str()), (StatusCode::CONFLICT, Some("session_over")));
}

#[tokio::test]
async fn missing_archive_and_storage_failure_are_distinct() {
    let (_, app) = app();
    let (status, v) = call(&app, "GET", "/archives/s000042", None).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));

    let blocker = tempfile::NamedTempFile::new().unwrap();
    let config = ServiceConfig {
        default_pacing: 0.0,
        archive_dir: Some(blocker.path().join("archives")),
        ..ServiceConfig::default()
    };
    let broken = router(AppState::new(config).unwrap());
    let id = create(&broken, json!({"scenario": contested(), "mode": "human_only"})).await;
    let (status, v) = call(&broken, "POST", &format!("/sessions/{id}/persist"), None).await;
    assert_eq!(status, StatusCode::INTERNAL_SERVER_ERROR);
    assert_eq!(v["code"], "storage_error");
    let (status, v) = call(&broken, "GET", &format!("/archives/{id}"), None).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::INTERNAL_SERVER_ERROR, Some("storage_error")));
}

#[tokio::test]
async fn archives_persist_to_a_directory() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig { default_pacing: 0.0, archive_dir: Some(dir.path().to_path_buf()), ..ServiceConfig::default() };
    let app = router(AppState::new(config).unwrap());
    let id = create(&app, json!({"scenario_id": "standard", "mode": "ai_only"})).await;
    let (_, v) = command(&app, &id, json!({"command": "step", "dt": 1000})).await;
    assert!(v["terminal"].as_bool().unwrap());
    assert!(dir.path().join(format!("{id}.json")).exists());
    let (status, loaded) = call(&app, "GET", &format!("/archives/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(loaded["archive"]["report"]["completion_basis"], "simulated_minutes");
    assert_eq!(loaded["archive"]["report"]["deaths"], 0);
}

#[tokio::test]
async fn ai_only_session_with_pacing_finishes_unattended() {
    let (_, app) = app();
    let id = create(&app, json!({"scenario_id": "standard", "mode": "ai_only", "pacing": 1000})).await;
    let (status, _) = command(&app, &id, json!({"command": "start"})).await;
    assert_eq!(status, StatusCode::OK);
    let deadline = tokio::time::Instant::now() + Duration::from_secs(30);
    loop {
        let (_, state) = call(&app, "GET", &format!("/sessions/{id}/state"), None).await;
        if state["terminal"].as_bool().unwrap() {
            assert_eq!(state["report"]["deaths"], 0);
            assert!(!state["running"].as_bool().unwrap());
            break;
        }
        assert!(tokio::time::Instant::now() < deadline, "session stalled at t={}", state["clock"]);
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}

#[tokio::test]
async fn pause_stops_the_clock() {
    let (_, app) = app();
    let id = create(&app, json!({"scenario_id": "standard", "mode": "human_only", "pacing": 200})).await;
    command(&app, &id, json!({"command": "start"})).await;
    tokio::time::sleep(Duration::from_millis(60)).await;
    command(&app, &id, json!({"command": "pause"})).await;
    let (_, a) = call(&app, "GET", &format!("/sessions/{id}/state"), None).await;
    tokio::time::sleep(Duration::from_millis(60)).await;
    let (_, b) = call(&app, "GET", &format!("/sessions/{id}/state"), None).await;
    assert!(a["clock"].as_u64().unwrap() > 0);
    assert_eq!(a["clock"], b["clock"]);
    assert!(!b["running"].as_bool().unwrap());
}

#[tokio::test]
async fn state_hides_unrevealed_patients() {
    let (_, app) = app();
    let id = create(&app, json!({"scenario_id": "standard", "mode": "human_only"})).await;
    let (_, s0) = call(&app, "GET", &format!("/sessions/{id}/state"), None).await;
    let bar = &s0["status_bar"];
    assert_eq!(s0["patients"].as_array().unwrap().len() as u64, bar["revealed"].as_u64().unwrap());
    assert!(bar["revealed"].as_u64().unwrap() < 20);
    assert_eq!(s0["hospitals"].as_array().unwrap().len(), 4);
    command(&app, &id, json!({"command": "step", "dt": 230})).await;
    let (_, s1) = call(&app, "GET", &format!("/sessions/{id}/state"), None).await;
    assert_eq!(s1["status_bar"]["revealed"], 20);
}

#[tokio::test]
async fn concurrent_commands_are_serialized() {
    let (state, app) = app();
    let id = create(&app, json!({"scenario_id": "complex", "mode": "human_only"})).await;
    command(&app, &id, json!({"command": "step", "dt": 120})).await;
    let mut tasks = Vec::new();
    for p in 1..=60u32 {
        for h in 1..=6u32 {
            let (app, id) = (app.clone(), id.clone());
            tasks.push(tokio::spawn(async move {
                command(&app, &id, json!({"command": "assign", "patient": p, "hospital": h})).await.0
            }));
        }
    }
    let mut ok = 0;
    for t in tasks {
        if t.await.unwrap() == StatusCode::OK {
            ok += 1;
        }
    }
    assert!(ok > 0);
    let handle = state.session(&id).unwrap();
    let s = handle.session.lock().await;
    let log = s.state().event_log();
    assert!(log.iter().enumerate().all(|(i, e)| e.seq == i as u64));
    let assigned = log.iter().filter(|e| e.kind.name() == "assigned").count();
    assert_eq!(assigned, ok);
    for (r, c) in s.state().reservations().iter().zip(s.state().effective_capacity()) {
        assert!(r.fits_within(c));
    }
}
