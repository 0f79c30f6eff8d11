//! HTTP inspection service.
//!
//! Readers work on an immutable published snapshot of the workspace; edits
//! and patch operations go through one async mutex and publish a new
//! snapshot when they succeed. Generated results are cached under ids
//! `r1`, `r2`, ... together with the snapshot that produced them, so later
//! queries about a result see the resources it was generated from.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use latticegen_core::network::ValidationReport;
use latticegen_core::regions::{region_graph, region_view};
use latticegen_core::suite::{run_suite, Example, Suite, SuiteReport};
use latticegen_core::trace::{decision_path, diff_traces, selection_expression, where_introduced, Aspect, ViewKind};
use latticegen_core::{GenerationResult, LanguageView, ResourceSet};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Mutex;

use crate::files::generate_spl;
use crate::workspace::{Change, Gate, Patch, Workspace};
use crate::Error;

/// One workspace state as readers see it.
#[derive(Debug)]
pub struct Published {
    pub resources: ResourceSet,
    pub label: String,
    views: BTreeMap<String, LanguageView>,
}

impl Published {
    fn of(ws: &Workspace) -> Self {
        let resources = ws.current().clone();
        let views = resources
            .language_codes
            .iter()
            .filter_map(|code| resources.view(code).ok().map(|v| (code.clone(), v)))
            .collect();
        Published { label: ws.current_label(), resources, views }
    }

    fn view(&self, lang: &str) -> Result<&LanguageView, ApiError> {
        self.views
            .get(lang)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UNKNOWN-LANGUAGE", format!("no language `{lang}`")))
    }
}

#[derive(Debug)]
struct Cached {
    result: GenerationResult,
    source: Arc<Published>,
}

/// Cached results as exported by `GET /snapshot`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub results: BTreeMap<String, GenerationResult>,
}

#[derive(Debug)]
pub struct AppState {
    writer: Mutex<Workspace>,
    published: RwLock<Arc<Published>>,
    results: RwLock<BTreeMap<String, Arc<Cached>>>,
    next_id: AtomicUsize,
    suite: RwLock<Option<Suite>>,
    language: String,
}

impl AppState {
    pub fn new(ws: Workspace, language: &str, suite: Option<Suite>) -> Arc<Self> {
        Arc::new(AppState {
            published: RwLock::new(Arc::new(Published::of(&ws))),
            writer: Mutex::new(ws),
            results: RwLock::new(BTreeMap::new()),
            next_id: AtomicUsize::new(1),
            suite: RwLock::new(suite),
            language: language.to_owned(),
        })
    }

    fn current(&self) -> Arc<Published> {
        self.published.read().expect("lock poisoned").clone()
    }

    fn publish(&self, ws: &Workspace) {
        *self.published.write().expect("lock poisoned") = Arc::new(Published::of(ws));
    }

    fn cached(&self, id: &str) -> Result<Arc<Cached>, ApiError> {
        self.results
            .read()
            .expect("lock poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UNKNOWN-RESULT", format!("no result `{id}`")))
    }

    fn store(&self, result: GenerationResult, source: Arc<Published>) -> String {
        let id = format!("r{}", self.next_id.fetch_add(1, Ordering::SeqCst));
        self.results.write().expect("lock poisoned").insert(id.clone(), Arc::new(Cached { result, source }));
        id
    }

    pub fn snapshot(&self) -> Snapshot {
        let results = self.results.read().expect("lock poisoned");
        Snapshot { results: results.iter().map(|(id, c)| (id.clone(), c.result.clone())).collect() }
    }

    /// Adds exported results to the cache under their original ids. They are
    /// inspected against the resources that are current now.
    pub fn load_snapshot(&self, snapshot: Snapshot) {
        let source = self.current();
        let mut results = self.results.write().expect("lock poisoned");
        for (id, result) in snapshot.results {
            if let Some(n) = id.strip_prefix('r').and_then(|n| n.parse::<usize>().ok()) {
                self.next_id.fetch_max(n + 1, Ordering::SeqCst);
            }
            results.insert(id, Arc::new(Cached { result, source: source.clone() }));
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: String) -> Self {
        ApiError { status, body: json!({ "code": code, "message": message }) }
    }

    fn with(mut self, key: &str, value: impl Serialize) -> Self {
        self.body[key] = serde_json::to_value(value).expect("payloads serialize");
        self
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let code = e.code();
        let message = e.to_string();
        match e {
            Error::ValidationFailed(report) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, message).with("report", report)
            }
            Error::SuiteRegression(report) => ApiError::new(StatusCode::CONFLICT, code, message).with("report", report),
            Error::StalePatch { .. } | Error::EmptyPatch | Error::SuiteRequired { .. } => {
                ApiError::new(StatusCode::CONFLICT, code, message)
            }
            Error::UnknownObject { .. } => ApiError::new(StatusCode::NOT_FOUND, code, message),
            Error::Resource { code, .. } if code.starts_with("UNKNOWN-") || code == "SYSTEM-NOT-FIRED" => {
                ApiError::new(StatusCode::NOT_FOUND, code, message)
            }
            _ => ApiError::new(StatusCode::BAD_REQUEST, code, message),
        }
    }
}

macro_rules! from_core {
    ($($t:path),*) => {$(
        impl From<$t> for ApiError {
            fn from(e: $t) -> Self {
                Error::from(e).into()
            }
        }
    )*};
}

from_core!(
    latticegen_core::network::NetworkError,
    latticegen_core::regions::RegionError,
    latticegen_core::trace::TraceError
);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type Reply<T> = Result<Json<T>, ApiError>;

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    let text = if body.is_empty() { &b"{}"[..] } else { &body[..] };
    serde_json::from_slice(text).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "MALFORMED-REQUEST", e.to_string()))
}

#[derive(Deserialize)]
struct GenerateRequest {
    spl: String,
    lang: Option<String>,
}

#[derive(Serialize)]
struct Generated {
    result_id: String,
    #[serde(flatten)]
    result: GenerationResult,
}

async fn generate(State(st): State<Arc<AppState>>, body: Bytes) -> Reply<Generated> {
    let req: GenerateRequest = parse_body(&body)?;
    let source = st.current();
    let lang = req.lang.unwrap_or_else(|| st.language.clone());
    source.view(&lang)?;
    let result = generate_spl(&source.resources, &lang, &req.spl, &source.label)?;
    let result_id = st.store(result.clone(), source);
    Ok(Json(Generated { result_id, result }))
}

async fn result(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Reply<GenerationResult> {
    Ok(Json(st.cached(&id)?.result.clone()))
}

#[derive(Deserialize)]
struct SeQuery {
    view: Option<String>,
}

async fn selection(
    State(st): State<Arc<AppState>>,
    Path((id, unit)): Path<(String, String)>,
    Query(q): Query<SeQuery>,
) -> Reply<Value> {
    let c = st.cached(&id)?;
    let kind: ViewKind = q
        .view
        .as_deref()
        .unwrap_or("list")
        .parse()
        .map_err(|e: String| ApiError::new(StatusCode::BAD_REQUEST, "MALFORMED-REQUEST", e))?;
    let view = c.source.view(&c.result.language)?;
    let se = selection_expression(&c.result, &view.network, &unit, kind)?;
    Ok(Json(serde_json::to_value(se).expect("payloads serialize")))
}

#[derive(Deserialize)]
struct FocusQuery {
    aspect: String,
}

async fn focus(
    State(st): State<Arc<AppState>>,
    Path((id, unit)): Path<(String, String)>,
    Query(q): Query<FocusQuery>,
) -> Reply<Value> {
    let c = st.cached(&id)?;
    let aspect: Aspect = q.aspect.parse().map_err(|e: latticegen_core::trace::TraceError| {
        ApiError::new(StatusCode::BAD_REQUEST, e.code(), e.to_string())
    })?;
    let view = c.source.view(&c.result.language)?;
    let report = where_introduced(&c.result, &view.network, &unit, &aspect)?;
    Ok(Json(serde_json::to_value(report).expect("payloads serialize")))
}

async fn chooser_path(
    State(st): State<Arc<AppState>>,
    Path((id, unit, system)): Path<(String, String, String)>,
) -> Reply<Value> {
    let c = st.cached(&id)?;
    let outcome = decision_path(&c.result, &unit, &system)?;
    Ok(Json(serde_json::to_value(outcome).expect("payloads serialize")))
}

#[derive(Deserialize)]
struct LatticeQuery {
    focus: String,
    radius: Option<usize>,
    lang: Option<String>,
}

async fn lattice(State(st): State<Arc<AppState>>, Query(q): Query<LatticeQuery>) -> Reply<Value> {
    let p = st.current();
    let view = p.view(q.lang.as_deref().unwrap_or(&st.language))?;
    let fragment = view.network.lattice_subgraph(&q.focus, q.radius.unwrap_or(1))?;
    Ok(Json(serde_json::to_value(fragment).expect("payloads serialize")))
}

#[derive(Deserialize)]
struct LangQuery {
    lang: Option<String>,
}

async fn regions(State(st): State<Arc<AppState>>, Query(q): Query<LangQuery>) -> Reply<Value> {
    let p = st.current();
    let view = p.view(q.lang.as_deref().unwrap_or(&st.language))?;
    Ok(Json(serde_json::to_value(region_graph(&view.network)?).expect("payloads serialize")))
}

async fn region(State(st): State<Arc<AppState>>, Path(name): Path<String>, Query(q): Query<LangQuery>) -> Reply<Value> {
    let p = st.current();
    let view = p.view(q.lang.as_deref().unwrap_or(&st.language))?;
    Ok(Json(serde_json::to_value(region_view(&view.network, &name)?).expect("payloads serialize")))
}

async fn system(State(st): State<Arc<AppState>>, Path(name): Path<String>, Query(q): Query<LangQuery>) -> Reply<Value> {
    let p = st.current();
    let view = p.view(q.lang.as_deref().unwrap_or(&st.language))?;
    let context = view.network.paradigmatic_context(&name)?;
    let system = view.network.system(&name).expect("context implies the system exists");
    Ok(Json(json!({
        "system": system,
        "paradigmatic_context": context,
        "chooser": view.chooser_for(system),
    })))
}

async fn edit(State(st): State<Arc<AppState>>, body: Bytes) -> Reply<Value> {
    let change: Change = parse_body(&body)?;
    let mut ws = st.writer.lock().await;
    let edit = ws.record_edit(change)?.clone();
    st.publish(&ws);
    Ok(Json(json!({
        "edit": edit,
        "pending": ws.pending().len(),
        "version": ws.current_label(),
    })))
}

#[derive(Deserialize)]
struct CreateRequest {
    #[serde(default)]
    note: String,
}

async fn patch_create(State(st): State<Arc<AppState>>, body: Bytes) -> Reply<Patch> {
    let req: CreateRequest = parse_body(&body)?;
    let mut ws = st.writer.lock().await;
    let patch = ws.create_patch(&req.note)?;
    st.publish(&ws);
    Ok(Json(patch))
}

async fn patch_load(State(st): State<Arc<AppState>>, body: Bytes) -> Reply<Value> {
    let patch: Patch = parse_body(&body)?;
    let mut ws = st.writer.lock().await;
    ws.queue_patch(patch)?;
    st.publish(&ws);
    Ok(Json(json!({ "version": ws.current_label(), "frozen": ws.frozen().len() })))
}

#[derive(Deserialize)]
struct AcceptRequest {
    #[serde(default)]
    force: bool,
}

async fn patch_accept(State(st): State<Arc<AppState>>, body: Bytes) -> Reply<Value> {
    let req: AcceptRequest = parse_body(&body)?;
    let suite = st.suite.read().expect("lock poisoned").clone();
    let mut ws = st.writer.lock().await;
    let version = ws.accept_patches(Gate { suite: suite.as_ref(), force: req.force })?.clone();
    st.publish(&ws);
    Ok(Json(json!({ "version": version, "label": version.to_string() })))
}

/// Runs the posted examples, or the service's suite when the body is empty.
async fn suite_run(State(st): State<Arc<AppState>>, body: Bytes) -> Reply<SuiteReport> {
    let suite = if body.is_empty() {
        st.suite.read().expect("lock poisoned").clone().unwrap_or_default()
    } else {
        Suite::from(parse_body::<Vec<Example>>(&body)?)
    };
    let p = st.current();
    Ok(Json(run_suite(&p.resources, &suite, &p.label)))
}

#[derive(Deserialize)]
struct DiffQuery {
    a: String,
    b: String,
}

async fn diff(State(st): State<Arc<AppState>>, Query(q): Query<DiffQuery>) -> Reply<Value> {
    let (a, b) = (st.cached(&q.a)?, st.cached(&q.b)?);
    Ok(Json(serde_json::to_value(diff_traces(&a.result, &b.result)).expect("payloads serialize")))
}

async fn snapshot(State(st): State<Arc<AppState>>) -> Json<Snapshot> {
    Json(st.snapshot())
}

async fn snapshot_load(State(st): State<Arc<AppState>>, body: Bytes) -> Reply<Value> {
    let snap: Snapshot = parse_body(&body)?;
    let n = snap.results.len();
    st.load_snapshot(snap);
    Ok(Json(json!({ "loaded": n })))
}

async fn validate(State(st): State<Arc<AppState>>) -> Json<ValidationReport> {
    Json(latticegen_core::resources::validate_resources(&st.current().resources))
}

/// All endpoints. With `ui`, files under that directory are served at `/`.
pub fn router(state: Arc<AppState>, ui: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/generate", post(generate))
        .route("/result/{id}", get(result))
        .route("/result/{id}/unit/{unit}/se", get(selection))
        .route("/result/{id}/unit/{unit}/focus", get(focus))
        .route("/result/{id}/unit/{unit}/system/{system}/chooser-path", get(chooser_path))
        .route("/lattice", get(lattice))
        .route("/regions/graph", get(regions))
        .route("/regions/{name}/view", get(region))
        .route("/system/{name}", get(system))
        .route("/validate", get(validate))
        .route("/edit", post(edit))
        .route("/patch/create", post(patch_create))
        .route("/patch/load", post(patch_load))
        .route("/patch/accept", post(patch_accept))
        .route("/suite/run", post(suite_run))
        .route("/diff", get(diff))
        .route("/snapshot", get(snapshot).post(snapshot_load))
        .with_state(state);
    match ui {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(state: Arc<AppState>, addr: SocketAddr, ui: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state, ui))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
