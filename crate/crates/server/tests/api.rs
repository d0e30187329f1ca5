use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn new_session(app: &Router, body: Value) -> String {
    let (status, s) = call(app, Method::POST, "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{s}");
    s["id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn create_and_fetch_session() {
    let app = plives_server::router();
    let (status, s) = call(&app, Method::POST, "/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(s["schema"], "pl-exercise/1");
    assert_eq!(s["lives_per_system"], 8);
    let id = s["id"].as_str().unwrap();
    let (status, got) = call(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(got, s);
}

#[tokio::test]
async fn six_lives_is_rejected_with_minimum() {
    let app = plives_server::router();
    let (status, e) = call(&app, Method::POST, "/sessions", Some(json!({"lives_per_system": 6}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["code"], "NotRepresentable");
    assert!(e["message"].as_str().unwrap().contains('8'));
    assert_eq!(e["details"]["minimal"], 8);
}

#[tokio::test]
async fn rounds_follow_the_exercise() {
    let app = plives_server::router();
    let id = new_session(&app, json!({"seed": 5})).await;
    let (status, r) =
        call(&app, Method::POST, &format!("/sessions/{id}/rounds"), Some(json!({"setting_a": 1, "setting_b": 1})))
            .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(r["same"], 0);
    assert_eq!(r["different"], 8);
    assert_eq!(r["pairs"].as_array().unwrap().len(), 8);
    let (_, r) =
        call(&app, Method::POST, &format!("/sessions/{id}/rounds"), Some(json!({"setting_a": 1, "setting_b": 2})))
            .await;
    assert_eq!(r["same"], 6);
    assert_eq!(r["index"], 1);

    let (status, again) = call(&app, Method::GET, &format!("/sessions/{id}/rounds/1"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again, r);

    let (_, summary) = call(&app, Method::GET, &format!("/sessions/{id}/summary"), None).await;
    assert_eq!(summary["rounds"], 2);
    assert_eq!(summary["p_same_given_different"], 0.75);
    assert_eq!(summary["quantum_prediction"], 0.75);
    assert_eq!(summary["verdict"], "violation");
    assert!((summary["lhv_bound"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-15);
}

#[tokio::test]
async fn empty_summary_is_insufficient() {
    let app = plives_server::router();
    let id = new_session(&app, json!({})).await;
    let (_, summary) = call(&app, Method::GET, &format!("/sessions/{id}/summary"), None).await;
    assert_eq!(summary["p_same_given_different"], Value::Null);
    assert_eq!(summary["verdict"], "insufficient data");
}

#[tokio::test]
async fn error_statuses() {
    let app = plives_server::router();
    let (status, e) = call(&app, Method::GET, "/sessions/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(e["code"], "UnknownSession");
    let (status, _) =
        call(&app, Method::POST, "/sessions/nope/rounds", Some(json!({"setting_a": 1, "setting_b": 1}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let id = new_session(&app, json!({})).await;
    let (status, e) =
        call(&app, Method::POST, &format!("/sessions/{id}/rounds"), Some(json!({"setting_a": 4, "setting_b": 1})))
            .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(e["code"], "BadSetting");
    let (status, e) =
        call(&app, Method::POST, &format!("/sessions/{id}/rounds"), Some(json!({"setting_a": "x"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(e["code"], "BadRequest");
    let (status, e) = call(&app, Method::GET, &format!("/sessions/{id}/rounds/3"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(e["code"], "UnknownRound");

    let (status, _) = call(&app, Method::DELETE, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, _) = call(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn same_seed_replays_identically() {
    let app = plives_server::router();
    let a = new_session(&app, json!({"seed": 42})).await;
    let b = new_session(&app, json!({"seed": 42})).await;
    assert_ne!(a, b);
    for (sa, sb) in [(1, 2), (3, 3), (2, 3), (3, 1)] {
        let body = json!({"setting_a": sa, "setting_b": sb});
        let (_, ra) = call(&app, Method::POST, &format!("/sessions/{a}/rounds"), Some(body.clone())).await;
        let (_, rb) = call(&app, Method::POST, &format!("/sessions/{b}/rounds"), Some(body)).await;
        assert_eq!(ra, rb);
    }
    let (_, sa) = call(&app, Method::GET, &format!("/sessions/{a}/summary"), None).await;
    let (_, sb) = call(&app, Method::GET, &format!("/sessions/{b}/summary"), None).await;
    assert_eq!(sa, sb);
}

#[tokio::test]
async fn tallies_match_recomputation() {
    let app = plives_server::router();
    let id = new_session(&app, json!({"seed": 9, "lives_per_system": 16})).await;
    for a in 1..=3 {
        for b in 1..=3 {
            call(&app, Method::POST, &format!("/sessions/{id}/rounds"), Some(json!({"setting_a": a, "setting_b": b})))
                .await;
        }
    }
    let (_, s) = call(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    let session: plives::exercise::Session = serde_json::from_value(s).unwrap();
    assert_eq!(plives::exercise::Tallies::from_rounds(&session.rounds), session.tallies);
    let (_, summary) = call(&app, Method::GET, &format!("/sessions/{id}/summary"), None).await;
    assert_eq!(summary["p_same_given_different"], 0.75);
    assert_eq!(summary["p_opposite_given_same"], 1.0);
}

#[tokio::test]
async fn cors_preflight_is_answered() {
    let app = plives_server::router();
    let req = Request::builder()
        .method(Method::OPTIONS)
        .uri("/sessions")
        .header("origin", "http://localhost:5173")
        .header("access-control-request-method", "POST")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert!(resp.headers().contains_key("access-control-allow-origin"));
}

#[tokio::test]
async fn scenarios_are_listed_and_run() {
    let app = plives_server::router();
    let (status, list) = call(&app, Method::GET, "/scenarios", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(list.as_array().unwrap().iter().any(|e| e["name"] == "wigner_mermin"));
    let (status, report) = call(&app, Method::GET, "/scenarios/example1", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["schema"], "pl-report/1");
    let (status, _) = call(&app, Method::GET, "/scenarios/missing", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn serves_over_tcp() {
    let (listener, addr) = plives_server::bind(0).await.unwrap();
    assert_ne!(addr.port(), 0);
    let server = tokio::spawn(plives_server::serve(listener, plives_server::router()));
    let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    stream.write_all(b"GET /scenarios HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").await.unwrap();
    let mut buf = Vec::new();
    stream.read_to_end(&mut buf).await.unwrap();
    assert!(String::from_utf8_lossy(&buf).starts_with("HTTP/1.1 200"));
    server.abort();
}
