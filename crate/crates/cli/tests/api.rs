mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use common::{Schemas, ENTITY};
use http_body_util::BodyExt;
use pathwise_cli::commands;
use pathwise_cli::server::{router, AppState};
use pathwise_core::pipeline::PipelineConfig;
use pathwise_core::Graph;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Api {
    app: Router,
    state: Arc<AppState>,
    _dir: tempfile::TempDir,
}

impl Api {
    fn new(with_run: bool) -> Self {
        let dir = common::trained_data_dir();
        if with_run {
            commands::analyze(dir.path(), ENTITY, None, &PipelineConfig::default(), None).unwrap();
        }
        let ui = dir.path().join("ui");
        std::fs::create_dir_all(&ui).unwrap();
        std::fs::write(ui.join("index.html"), "<html>pathways</html>").unwrap();
        let state = Arc::new(AppState::new(dir.path(), PipelineConfig::default()));
        Self { app: router(state.clone(), Some(&ui)), state, _dir: dir }
    }

    async fn call(&self, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, String, Option<String>) {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
            .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let ctype = resp.headers().get("content-type").map(|v| v.to_str().unwrap().to_string());
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        (status, String::from_utf8(bytes.to_vec()).unwrap(), ctype)
    }

    async fn get_json(&self, uri: &str) -> (StatusCode, Value) {
        let (status, body, ctype) = self.call("GET", uri, None).await;
        assert_eq!(ctype.as_deref(), Some("application/json"), "{uri}");
        (status, serde_json::from_str(&body).unwrap())
    }

    async fn post_json(&self, uri: &str, body: &str) -> (StatusCode, Value) {
        let (status, body, _) = self.call("POST", uri, Some(body)).await;
        (status, serde_json::from_str(&body).unwrap())
    }
}

#[tokio::test]
async fn healthz() {
    let api = Api::new(false);
    let (status, body) = api.get_json("/healthz").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({"ok": true}));
    Schemas::new().assert_valid("health", &body);
}

#[tokio::test]
async fn read_endpoints_validate_and_agree() {
    let api = Api::new(true);
    let schemas = Schemas::new();

    let (status, entities) = api.get_json("/entities").await;
    assert_eq!(status, StatusCode::OK);
    schemas.assert_valid("entities", &entities);
    assert_eq!(entities[0]["id"], ENTITY);
    assert_eq!(entities[0]["posts"], 12);
    assert_eq!(entities[0]["runs"], 1);

    let (status, raw, _) = api.call("GET", &format!("/entities/{ENTITY}/pathways"), None).await;
    assert_eq!(status, StatusCode::OK);
    let graph_json: Value = serde_json::from_str(&raw).unwrap();
    schemas.assert_valid("graph", &graph_json);
    // export then import reproduces the same bytes
    let graph: Graph = serde_json::from_str(&raw).unwrap();
    assert_eq!(pathwise_core::pipeline::to_json_pretty(&graph), raw);
    let exported = commands::export(api.state.data_dir.as_path(), ENTITY, "latest", commands::ExportFormat::Json).unwrap();
    assert_eq!(exported, raw);

    let run_id = entities[0]["latest_run"].as_str().unwrap().to_string();
    let (_, by_id, _) = api.call("GET", &format!("/entities/{ENTITY}/pathways?run={run_id}"), None).await;
    assert_eq!(by_id, raw);

    let (status, report) = api.get_json(&format!("/entities/{ENTITY}/aspects")).await;
    assert_eq!(status, StatusCode::OK);
    schemas.assert_valid("report", &report);
    assert_eq!(report["entity"], ENTITY);

    for cluster in graph.clusters() {
        let (status, posts) = api.get_json(&format!("/entities/{ENTITY}/posts?cluster={}", cluster.id)).await;
        assert_eq!(status, StatusCode::OK);
        schemas.assert_valid("posts", &posts);
        let ids: Vec<&str> = posts.as_array().unwrap().iter().map(|p| p["post"]["id"].as_str().unwrap()).collect();
        assert_eq!(ids, cluster.members.iter().map(String::as_str).collect::<Vec<_>>());
        for p in posts.as_array().unwrap() {
            assert_eq!(p["post"]["id"], p["analysis"]["post_id"]);
        }
    }
    let (_, all) = api.get_json(&format!("/entities/{ENTITY}/posts")).await;
    assert_eq!(all.as_array().unwrap().len(), 12);

    let (status, run) = api.get_json(&format!("/runs/{run_id}")).await;
    assert_eq!(status, StatusCode::OK);
    schemas.assert_valid("run", &run);
    assert_eq!(run["counts"]["posts"], 12);
}

#[tokio::test]
async fn time_filter_keeps_overlapping_layers() {
    let api = Api::new(true);
    let (_, full) = api.get_json(&format!("/entities/{ENTITY}/pathways")).await;
    let layers = full["layers"].as_array().unwrap();
    assert!(layers.len() >= 2);
    let second_start = layers[1]["window"]["start"].as_str().unwrap();
    let (status, part) = api.get_json(&format!("/entities/{ENTITY}/pathways?from={second_start}")).await;
    assert_eq!(status, StatusCode::OK);
    Schemas::new().assert_valid("graph", &part);
    assert_eq!(part["layers"].as_array().unwrap().len(), layers.len() - 1);
    assert_eq!(part["layers"][0], layers[1]);
    for e in part["edges"].as_array().unwrap() {
        assert!(!e["from"].as_str().unwrap().starts_with("L0"));
    }
}

#[tokio::test]
async fn error_statuses() {
    let api = Api::new(true);
    let schemas = Schemas::new();
    for uri in [
        "/entities/nobody/pathways".to_string(),
        "/entities/nobody/aspects".to_string(),
        format!("/entities/{ENTITY}/pathways?run=no-such-run"),
        format!("/entities/{ENTITY}/posts?cluster=L99C0"),
        "/runs/no-such-run".to_string(),
    ] {
        let (status, body) = api.get_json(&uri).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        schemas.assert_valid("error", &body);
    }
    let (status, body) = api.get_json(&format!("/entities/{ENTITY}/pathways?from=yesterday")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    schemas.assert_valid("error", &body);

    for bad in [
        "not json".to_string(),
        "{}".to_string(),
        json!({"entity": ENTITY, "config": {"no_such_key": 1}}).to_string(),
        json!({"entity": ENTITY, "config": {"tau": 2.0}}).to_string(),
        json!({"entity": ENTITY, "extra": true}).to_string(),
        json!({"entity": ENTITY, "window": {"start": "2018-03-09T00:00:00Z", "end": "2018-03-08T00:00:00Z"}}).to_string(),
    ] {
        let (status, body) = api.post_json("/runs", &bad).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bad}");
        schemas.assert_valid("error", &body);
    }
    let (status, _) = api.post_json("/runs", &json!({"entity": "nobody"}).to_string()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn entity_without_runs_is_known_but_has_no_pathways() {
    let api = Api::new(false);
    let (_, entities) = api.get_json("/entities").await;
    assert_eq!(entities[0]["runs"], 0);
    assert_eq!(entities[0]["latest_run"], Value::Null);
    let (status, _) = api.get_json(&format!("/entities/{ENTITY}/pathways")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn concurrent_run_for_same_entity_conflicts() {
    let api = Api::new(false);
    api.state.in_progress.lock().unwrap().insert(ENTITY.to_string());
    let (status, body) = api.post_json("/runs", &json!({"entity": ENTITY}).to_string()).await;
    assert_eq!(status, StatusCode::CONFLICT);
    Schemas::new().assert_valid("error", &body);
}

#[tokio::test]
async fn posted_run_returns_the_run_and_becomes_latest() {
    let api = Api::new(false);
    let schemas = Schemas::new();
    let body = json!({"entity": ENTITY, "config": {"tau": 0.6, "window_hours": 12}}).to_string();
    let (status, run) = api.post_json("/runs", &body).await;
    assert_eq!(status, StatusCode::CREATED);
    schemas.assert_valid("run", &run);
    assert_eq!(run["entity_id"], ENTITY);
    assert_eq!(run["config"]["tau"], 0.6);
    assert_eq!(run["config"]["window_hours"], 12.0);
    assert_eq!(run["counts"]["posts"], 12);
    assert!(api.state.in_progress.lock().unwrap().is_empty());

    let run_id = run["run_id"].as_str().unwrap();
    let (status, fetched) = api.get_json(&format!("/runs/{run_id}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(fetched, run);
    let (_, entities) = api.get_json("/entities").await;
    assert_eq!(entities[0]["latest_run"], run_id);
    let (_, graph) = api.get_json(&format!("/entities/{ENTITY}/pathways?run={run_id}")).await;
    schemas.assert_valid("graph", &graph);
}

#[tokio::test]
async fn posted_window_limits_the_run() {
    let api = Api::new(false);
    let body = json!({"entity": ENTITY, "window": {"start": "2018-03-08T00:00:00Z", "end": "2018-03-09T00:00:00Z"}});
    let (status, run) = api.post_json("/runs", &body.to_string()).await;
    assert_eq!(status, StatusCode::CREATED);
    let n = run["counts"]["posts"].as_u64().unwrap();
    assert!(n > 0 && n < 12, "{n} posts in window");
    let empty = json!({"entity": ENTITY, "window": {"start": "2030-01-01T00:00:00Z", "end": "2030-01-02T00:00:00Z"}});
    let (status, body) = api.post_json("/runs", &empty.to_string()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    Schemas::new().assert_valid("error", &body);
    assert!(api.state.in_progress.lock().unwrap().is_empty());
}

#[tokio::test]
async fn dashboard_is_served_statically() {
    let api = Api::new(false);
    let (status, body, _) = api.call("GET", "/ui/index.html", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, "<html>pathways</html>");
}
