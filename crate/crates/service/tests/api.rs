use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use http_body_util::BodyExt;
use rulequest_core::demo;
use rulequest_service::{router, AppState, OrderingMode, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

fn d2_d6_state(mode: OrderingMode) -> AppState {
    AppState::build(
        vec![
            ("d2d6".into(), demo::d2_d6_rulebase(), None),
            ("demo".into(), demo::demo_rulebase(), None),
        ],
        mode,
        7,
        Duration::from_secs(60),
    )
    .unwrap()
}

async fn call(state: &AppState, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = router(state.clone()).oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, v)
}

fn ids(view: &Value) -> Vec<String> {
    let mut out: Vec<String> = view["panels"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|p| p["items"].as_array().unwrap().iter())
        .map(|i| i["conditionId"].as_str().unwrap().to_string())
        .collect();
    out.sort();
    out
}

async fn open(state: &AppState, drugs: Value) -> (String, Value) {
    let (status, body) = call(state, Method::POST, "/sessions", Some(json!({"rulebaseId": "d2d6", "drugs": drugs}))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    (body["sessionId"].as_str().unwrap().to_string(), body)
}

#[tokio::test]
async fn health_and_listing() {
    let state = d2_d6_state(OrderingMode::Frequency);
    let (status, body) = call(&state, Method::GET, "/healthz", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["version"], env!("CARGO_PKG_VERSION"));

    let (_, body) = call(&state, Method::GET, "/rulebases", None).await;
    assert_eq!(body[0], json!({"id": "d2d6", "ruleCount": 2, "clinicalConditionCount": 4}));

    let (status, body) = call(&state, Method::GET, "/rulebases/d2d6/full", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["count"], 4);
    let (status, body) = call(&state, Method::GET, "/rulebases/nope/full", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "unknown_rulebase");
}

#[tokio::test]
async fn session_flow() {
    let state = d2_d6_state(OrderingMode::Frequency);
    let (id, body) = open(&state, json!(["antipsychotic"])).await;
    assert_eq!(ids(&body["view"]), ["constipation", "lewy_body", "parkinsonism"]);

    let uri = format!("/sessions/{id}/answers");
    let (status, body) = call(&state, Method::POST, &uri, Some(json!({"conditionId": "constipation", "checked": true}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["diff"]["appeared"], json!(["diverticulosis"]));

    let (_, got) = call(&state, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(got["view"], body["view"]);

    let (status, body) = call(&state, Method::POST, &uri, Some(json!({"conditionId": "parkinsonism", "checked": true, "code": "G20"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["diff"]["disappeared"], json!(["lewy_body"]));
    assert_eq!(body["recommendations"][0]["ruleId"], "D6");
    assert_eq!(body["recommendations"][0]["action"]["verb"], "stop");

    let (status, body) = call(&state, Method::PUT, &format!("/sessions/{id}/drugs"), Some(json!({"drugs": ["antipsychotic", "fibre"]}))).await;
    assert_eq!(status, StatusCode::OK);
    assert!(body["view"]["panels"].is_array());

    for _ in 0..2 {
        let (status, _) = call(&state, Method::DELETE, &format!("/sessions/{id}"), None).await;
        assert_eq!(status, StatusCode::NO_CONTENT);
    }
    let (status, body) = call(&state, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "unknown_session");
}

#[tokio::test]
async fn error_envelope() {
    let state = d2_d6_state(OrderingMode::Frequency);
    let (status, body) = call(&state, Method::POST, "/sessions", Some(json!({"rulebaseId": "missing", "drugs": []}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "unknown_rulebase");
    assert!(body["message"].is_string());

    let (id, _) = open(&state, json!([])).await;
    let uri = format!("/sessions/{id}/answers");
    let (status, body) = call(&state, Method::POST, &uri, Some(json!({"conditionId": "diverticulosis", "checked": true}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "not_displayed");

    let (status, body) = call(&state, Method::POST, &uri, Some(json!({"conditionId": "constipation", "checked": true, "code": "X"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "unknown_code");

    let (status, body) = call(&state, Method::POST, &uri, Some(json!({"checked": true}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["code"], "invalid_body");

    let (status, body) = call(&state, Method::PUT, &format!("/sessions/{id}/drugs"), Some(json!({"drugs": ["constipation"]}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "not_non_clinical");
}

#[tokio::test]
async fn pre_asserted_conditions() {
    let state = d2_d6_state(OrderingMode::Frequency);
    let (status, body) = call(
        &state,
        Method::POST,
        "/sessions",
        Some(json!({"rulebaseId": "d2d6", "drugs": [], "asserted": ["diverticulosis", {"conditionId": "constipation", "code": "K59.0"}]})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    assert_eq!(body["recommendations"][0]["ruleId"], "D2");
}

#[tokio::test]
async fn concurrent_mutations_are_serialized() {
    let state = d2_d6_state(OrderingMode::Frequency);
    let (id, _) = open(&state, json!(["antipsychotic"])).await;
    let uri = format!("/sessions/{id}/answers");
    let mut tasks = Vec::new();
    for k in 0..20 {
        let state = state.clone();
        let uri = uri.clone();
        tasks.push(tokio::spawn(async move {
            call(&state, Method::POST, &uri, Some(json!({"conditionId": "constipation", "checked": k % 2 == 0}))).await
        }));
    }
    for t in tasks {
        let (status, _) = t.await.unwrap();
        assert_eq!(status, StatusCode::OK);
    }
    let (_, body) = call(&state, Method::GET, &format!("/sessions/{id}"), None).await;
    let shown = ids(&body["view"]);
    let checked = body["view"]["panels"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|p| p["items"].as_array().unwrap().iter())
        .any(|i| i["conditionId"] == "constipation" && i["checked"] == true);
    assert_eq!(shown.contains(&"diverticulosis".to_string()), checked);
}

#[tokio::test]
async fn optimize_mode_reorders_per_patient() {
    let state = d2_d6_state(OrderingMode::Optimize);
    let (id, body) = open(&state, json!(["antipsychotic"])).await;
    assert_eq!(ids(&body["view"]).len(), 3);
    let (status, body) = call(&state, Method::PUT, &format!("/sessions/{id}/drugs"), Some(json!({"drugs": []}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ids(&body["view"]), ["constipation"]);
}

#[tokio::test]
async fn idle_sessions_expire() {
    let state = AppState::build(vec![("d2d6".into(), demo::d2_d6_rulebase(), None)], OrderingMode::Frequency, 0, Duration::from_millis(1)).unwrap();
    open(&state, json!([])).await;
    assert_eq!(state.session_count(), 1);
    tokio::time::sleep(Duration::from_millis(5)).await;
    assert_eq!(state.expire_idle(), 1);
    assert_eq!(state.session_count(), 0);
}

#[tokio::test]
async fn config_files_and_snapshots() {
    let dir = std::env::temp_dir().join(format!("rq-service-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("cat.json"), demo::D2_D6_CATALOG).unwrap();
    std::fs::write(dir.join("d2d6.rules"), demo::D2_D6_RULES).unwrap();
    std::fs::write(dir.join("d2d6.order"), "lewy_body\nparkinsonism\n").unwrap();
    let text = "catalog = \"cat.json\"\nordering = \"file\"\nsnapshot_dir = \"snaps\"\n[rulebases]\nd2d6 = \"d2d6.rules\"\n[order_files]\nd2d6 = \"d2d6.order\"\n";
    let cfg = ServiceConfig::parse(text, &dir).unwrap();
    let state = AppState::from_config(&cfg).unwrap();
    let (id, _) = open(&state, json!([])).await;
    call(&state, Method::POST, &format!("/sessions/{id}/answers"), Some(json!({"conditionId": "constipation", "checked": true}))).await;

    let reloaded = AppState::from_config(&cfg).unwrap();
    let (status, body) = call(&reloaded, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ids(&body["view"]), ["constipation", "diverticulosis"]);

    std::fs::write(dir.join("d2d6.rules"), "rule broken {").unwrap();
    assert!(AppState::from_config(&cfg).is_err());
    std::fs::remove_dir_all(&dir).unwrap();
}
