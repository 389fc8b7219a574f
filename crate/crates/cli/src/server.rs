//! JSON API over the corpus and the persisted runs.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use pathwise_core::corpus::{CorpusStore, Post};
use pathwise_core::pipeline::{
    corpus_dir, filter_graph, run_id_for, runs_dir, to_json_pretty, AnalyzedPost, PipelineConfig, PipelineError,
    PipelineRun, RunStore, GRAPH_FILE, REPORT_FILE,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use crate::commands;

pub struct AppState {
    pub data_dir: PathBuf,
    pub config: PipelineConfig,
    pub runs: RunStore,
    /// Entities with a run in flight.
    pub in_progress: Mutex<HashSet<String>>,
}

impl AppState {
    pub fn new(data_dir: &Path, config: PipelineConfig) -> Self {
        Self {
            data_dir: data_dir.to_path_buf(),
            config,
            runs: RunStore::new(runs_dir(data_dir)),
            in_progress: Mutex::new(HashSet::new()),
        }
    }

    fn store(&self) -> Result<CorpusStore, ApiError> {
        CorpusStore::open(&corpus_dir(&self.data_dir)).map_err(|e| ApiError::internal(e.to_string()))
    }
}

type Shared = Arc<AppState>;

pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::UnknownRun(_) | PipelineError::NoPosts(_) => Self::not_found(e.to_string()),
            PipelineError::Config(_) | PipelineError::Pathway(_) => Self::bad_request(e.to_string()),
            _ => Self::internal(e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

fn raw_json(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

pub fn router(state: Shared, ui_dir: Option<&Path>) -> Router {
    let mut app = Router::new()
        .route("/healthz", get(healthz))
        .route("/entities", get(entities))
        .route("/entities/{id}/pathways", get(pathways))
        .route("/entities/{id}/aspects", get(aspects))
        .route("/entities/{id}/posts", get(posts))
        .route("/runs", axum::routing::post(start_run))
        .route("/runs/{id}", get(run_status));
    if let Some(dir) = ui_dir {
        app = app.nest_service("/ui", ServeDir::new(dir));
    }
    app.with_state(state)
}

async fn healthz() -> Json<Value> {
    Json(json!({ "ok": true }))
}

#[derive(Debug, Serialize)]
struct EntityEntry {
    id: String,
    posts: usize,
    runs: usize,
    latest_run: Option<String>,
}

async fn entities(State(st): State<Shared>) -> Result<Json<Vec<EntityEntry>>, ApiError> {
    let mut by_id: BTreeMap<String, usize> = st.store()?.entities().into_iter().map(|e| (e.id, e.posts)).collect();
    for e in st.runs.entities()? {
        by_id.entry(e).or_default();
    }
    let mut out = Vec::with_capacity(by_id.len());
    for (id, posts) in by_id {
        let runs = st.runs.runs(&id)?;
        out.push(EntityEntry { latest_run: runs.last().map(|r| r.run_id.clone()), runs: runs.len(), id, posts });
    }
    Ok(Json(out))
}

/// 404 unless the entity has posts or runs.
fn known_entity(st: &AppState, id: &str) -> Result<(), ApiError> {
    if st.store()?.entities().iter().any(|e| e.id == id) || !st.runs.runs(id)?.is_empty() {
        Ok(())
    } else {
        Err(ApiError::not_found(format!("unknown entity {id:?}")))
    }
}

fn resolve_run(st: &AppState, id: &str, q: &HashMap<String, String>) -> Result<PipelineRun, ApiError> {
    known_entity(st, id)?;
    let run = q.get("run").map_or("latest", String::as_str);
    Ok(st.runs.resolve(id, run)?)
}

fn parse_time(q: &HashMap<String, String>, key: &str) -> Result<Option<DateTime<Utc>>, ApiError> {
    q.get(key)
        .map(|s| {
            DateTime::parse_from_rfc3339(s)
                .map(|t| t.with_timezone(&Utc))
                .map_err(|e| ApiError::bad_request(format!("{key}: {e}")))
        })
        .transpose()
}

async fn pathways(
    State(st): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let (from, to) = (parse_time(&q, "from")?, parse_time(&q, "to")?);
    let run = resolve_run(&st, &id, &q)?;
    if from.is_none() && to.is_none() {
        return Ok(raw_json(StatusCode::OK, st.runs.read_artifact(&run, GRAPH_FILE)?));
    }
    let graph = filter_graph(&st.runs.graph(&run)?, from, to);
    Ok(raw_json(StatusCode::OK, to_json_pretty(&graph)))
}

async fn aspects(
    State(st): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let run = resolve_run(&st, &id, &q)?;
    Ok(raw_json(StatusCode::OK, st.runs.read_artifact(&run, REPORT_FILE)?))
}

/// Member posts of `cluster` (all analyzed posts without it), in the
/// order the run lists them.
async fn posts(
    State(st): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Json<Vec<AnalyzedPost>>, ApiError> {
    let run = resolve_run(&st, &id, &q)?;
    let analyses = st.runs.analyses(&run)?;
    let members: Vec<String> = match q.get("cluster") {
        Some(cid) => {
            let graph = st.runs.graph(&run)?;
            let c = graph.cluster(cid).ok_or_else(|| ApiError::not_found(format!("unknown cluster {cid:?}")))?;
            c.members.clone()
        }
        None => analyses.iter().map(|a| a.post_id.clone()).collect(),
    };
    let posts: HashMap<String, Post> = st.store()?.query_posts(&id, None).into_iter().map(|p| (p.id.clone(), p)).collect();
    let by_id: HashMap<&str, _> = analyses.iter().map(|a| (a.post_id.as_str(), a)).collect();
    let mut out = Vec::with_capacity(members.len());
    for m in members {
        let (Some(post), Some(analysis)) = (posts.get(&m), by_id.get(m.as_str())) else {
            return Err(ApiError::internal(format!("post {m:?} missing from store or run")));
        };
        out.push(AnalyzedPost { post: post.clone(), analysis: (*analysis).clone() });
    }
    Ok(Json(out))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunRequest {
    entity: String,
    /// Overrides applied on top of the service configuration.
    #[serde(default)]
    config: Option<serde_json::Map<String, Value>>,
    #[serde(default)]
    window: Option<WindowReq>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WindowReq {
    start: DateTime<Utc>,
    end: DateTime<Utc>,
}

fn merged_config(base: &PipelineConfig, overrides: Option<serde_json::Map<String, Value>>) -> Result<PipelineConfig, ApiError> {
    let Some(overrides) = overrides else { return Ok(base.clone()) };
    let Value::Object(mut cfg) = serde_json::to_value(base).expect("config serializes") else {
        unreachable!("config is a map")
    };
    for (k, v) in overrides {
        if k != "embeddings" && !cfg.contains_key(&k) {
            return Err(ApiError::bad_request(format!("unknown config key {k:?}")));
        }
        cfg.insert(k, v);
    }
    let cfg: PipelineConfig =
        serde_json::from_value(Value::Object(cfg)).map_err(|e| ApiError::bad_request(format!("config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

struct InProgress {
    state: Shared,
    entity: String,
}

impl Drop for InProgress {
    fn drop(&mut self) {
        self.state.in_progress.lock().expect("lock").remove(&self.entity);
    }
}

async fn start_run(State(st): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let req: RunRequest = serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("body: {e}")))?;
    let cfg = merged_config(&st.config, req.config)?;
    let window = match req.window {
        Some(w) if w.start >= w.end => return Err(ApiError::bad_request("window start must precede end")),
        Some(w) => Some((w.start, w.end)),
        None => None,
    };
    if !st.store()?.entities().iter().any(|e| e.id == req.entity) {
        return Err(ApiError::not_found(format!("unknown entity {:?}", req.entity)));
    }
    if !st.in_progress.lock().expect("lock").insert(req.entity.clone()) {
        return Err(ApiError::new(StatusCode::CONFLICT, format!("a run for {:?} is already in progress", req.entity)));
    }
    let guard = InProgress { state: st.clone(), entity: req.entity };
    let run = tokio::task::spawn_blocking(move || {
        let run_id = run_id_for(Utc::now(), &guard.entity);
        commands::analyze(&guard.state.data_dir, &guard.entity, window, &cfg, Some(run_id))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?;
    match run {
        Ok(run) => Ok((StatusCode::CREATED, Json(run)).into_response()),
        Err(e) => match e.downcast::<PipelineError>() {
            Ok(pe) => Err(pe.into()),
            Err(e) => Err(ApiError::internal(format!("{e:#}"))),
        },
    }
}

async fn run_status(State(st): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Json<PipelineRun>, ApiError> {
    Ok(Json(st.runs.find(&id)?))
}

pub async fn serve(addr: &str, state: AppState, ui_dir: Option<&Path>) -> anyhow::Result<()> {
    let app = router(Arc::new(state), ui_dir);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
