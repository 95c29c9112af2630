//! HTTP routes under `/api/v1`.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use tokio::sync::Semaphore;
use topostudio::klm::{self, KlmWorkflow, OperatorTable};
use topostudio::sketch::{self, ArrowPoint, Raster, SketchError, SketchOptions};
use topostudio::{
    generate, validate_problem, BackendKind, DensityField, GenerateOptions, GridDims, ProblemSpec,
    ValidationIssue,
};
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::artifacts;
use crate::config::ServiceConfig;
use crate::store::{Job, JobState, JobStore, ResultSummary};

/// Request bodies may carry a base64 sketch of the largest accepted size.
const BODY_LIMIT: usize = 64 * 1024 * 1024;

const DEFAULT_SKETCH_GRID: usize = 64;
const DEFAULT_SKETCH_VOLFRAC: f64 = 0.5;

/// Spec fields an iteration may replace. Changing `dims` would orphan the
/// parent field.
const ITERATE_FIELDS: [&str; 9] = [
    "shape", "mask", "mask_mode", "loads", "supports", "volfrac", "strength", "seed", "material",
];

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<JobStore>,
    pub config: Arc<ServiceConfig>,
    permits: Arc<Semaphore>,
}

impl AppState {
    pub fn new(store: JobStore, config: ServiceConfig) -> Self {
        let permits = Arc::new(Semaphore::new(config.workers.max(1)));
        Self {
            store: Arc::new(store),
            config: Arc::new(config),
            permits,
        }
    }
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    NotFound(String),
    Conflict(String),
    TooLarge(String),
    Invalid(Vec<String>),
    Internal(String),
}

impl ApiError {
    fn issues(issues: &[ValidationIssue]) -> Self {
        Self::Invalid(issues.iter().map(ToString::to_string).collect())
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::Internal(e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            Self::Invalid(issues) => (StatusCode::UNPROCESSABLE_ENTITY, json!({ "issues": issues })),
            Self::BadRequest(m) => (StatusCode::BAD_REQUEST, json!({ "error": m })),
            Self::NotFound(m) => (StatusCode::NOT_FOUND, json!({ "error": m })),
            Self::Conflict(m) => (StatusCode::CONFLICT, json!({ "error": m })),
            Self::TooLarge(m) => (StatusCode::PAYLOAD_TOO_LARGE, json!({ "error": m })),
            Self::Internal(m) => {
                tracing::error!("{m}");
                (StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": m }))
            }
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    let cors = match &state.config.cors_origin {
        Some(origin) => match HeaderValue::from_str(origin) {
            Ok(v) => CorsLayer::new().allow_origin(AllowOrigin::exact(v)),
            Err(_) => CorsLayer::new(),
        },
        None => CorsLayer::new().allow_origin(AllowOrigin::any()),
    }
    .allow_methods([axum::http::Method::GET, axum::http::Method::POST])
    .allow_headers([header::CONTENT_TYPE]);

    Router::new()
        .route("/api/v1/health", get(health))
        .route("/api/v1/jobs", post(submit).get(list_jobs))
        .route("/api/v1/jobs/{id}", get(get_job))
        .route("/api/v1/jobs/{id}/iterate", post(iterate))
        .route("/api/v1/jobs/{id}/artifacts/{kind}", get(get_artifact))
        .route("/api/v1/klm", get(klm_time))
        .route("/api/v1/generate", post(generate_now))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .layer(cors)
        .with_state(state)
}

/// Syntax errors are malformed requests (400); well-formed JSON that does
/// not fit the schema is an invalid problem (422).
fn parse_json<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    let value: Value =
        serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("malformed JSON: {e}")))?;
    from_value(value)
}

fn from_value<T: DeserializeOwned>(value: Value) -> ApiResult<T> {
    serde_json::from_value(value).map_err(|e| ApiError::Invalid(vec![e.to_string()]))
}

async fn health(State(st): State<AppState>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
        "workers": st.config.workers.max(1),
        "remote": st.config.remote_url.is_some(),
    }))
}

// ---------------------------------------------------------------------------
// Jobs

#[derive(Debug, Default, Deserialize)]
struct SubmitParams {
    nelx: Option<usize>,
    nely: Option<usize>,
    volfrac: Option<f64>,
    strength: Option<f64>,
    seed: Option<u64>,
    backend: Option<String>,
    arrow_point: Option<ArrowPoint>,
}

#[derive(Debug, Deserialize)]
struct SubmitBody {
    spec: Option<Value>,
    /// Base64-encoded PNG.
    sketch: Option<String>,
    #[serde(flatten)]
    params: SubmitParams,
}

#[derive(Serialize)]
struct JobView {
    id: String,
    state: JobState,
    backend: &'static str,
    parent_id: Option<String>,
    result: Option<ResultSummary>,
    error: Option<String>,
    created_at: u64,
    finished_at: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    spec: Option<ProblemSpec>,
}

impl JobView {
    fn new(job: Job, with_spec: bool) -> Self {
        Self {
            backend: job.backend.label(),
            spec: with_spec.then(|| (*job.spec).clone()),
            id: job.id,
            state: job.state,
            parent_id: job.parent_id,
            result: job.result,
            error: job.error,
            created_at: job.created_at,
            finished_at: job.finished_at,
        }
    }
}

fn is_png(headers: &HeaderMap) -> bool {
    headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.trim_start().starts_with("image/png"))
}

fn decode_base64(text: &str) -> ApiResult<Vec<u8>> {
    // tolerate data URLs as produced by canvas.toDataURL()
    let payload = text.split_once("base64,").map_or(text, |(_, p)| p);
    base64::engine::general_purpose::STANDARD
        .decode(payload.trim())
        .map_err(|e| ApiError::BadRequest(format!("sketch is not valid base64: {e}")))
}

fn parse_backend(name: Option<&str>, default: BackendKind, config: &ServiceConfig) -> ApiResult<BackendKind> {
    match name {
        None => Ok(default),
        Some("det" | "deterministic") => Ok(BackendKind::Deterministic),
        Some("stoch" | "stochastic") => Ok(BackendKind::Stochastic),
        Some("remote") => config
            .remote_url
            .clone()
            .map(BackendKind::Remote)
            .ok_or_else(|| ApiError::BadRequest("remote backend is not configured".into())),
        Some(other) => Err(ApiError::BadRequest(format!(
            "unknown backend `{other}` (expected det, stoch or remote)"
        ))),
    }
}

struct SketchRequest {
    dims: GridDims,
    volfrac: f64,
    strength: f64,
    seed: u64,
    arrow_point: ArrowPoint,
}

fn spec_from_sketch(png: &[u8], req: SketchRequest, config: &ServiceConfig) -> ApiResult<ProblemSpec> {
    let (w, h) = Raster::png_dimensions(png).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let limit = config.max_image_side;
    if w > limit || h > limit {
        return Err(ApiError::TooLarge(format!(
            "sketch is {w}x{h} pixels, limit is {limit}x{limit}"
        )));
    }
    let opts = SketchOptions {
        arrow_point: req.arrow_point,
    };
    match sketch::parse_png(png, req.dims, req.volfrac, req.strength, req.seed, &opts) {
        Ok(parsed) if parsed.issues.is_empty() => Ok(parsed.spec),
        Ok(parsed) => Err(ApiError::issues(&parsed.issues)),
        Err(SketchError::EmptyShape) => Err(ApiError::issues(&[ValidationIssue::EmptyShape])),
        Err(e @ SketchError::DegenerateArrow { .. }) => Err(ApiError::Invalid(vec![e.to_string()])),
        Err(e) => Err(ApiError::BadRequest(e.to_string())),
    }
}

fn sketch_dims(params: &SubmitParams) -> ApiResult<GridDims> {
    let nelx = params.nelx.unwrap_or(DEFAULT_SKETCH_GRID);
    let nely = params.nely.unwrap_or(DEFAULT_SKETCH_GRID);
    GridDims::new(nelx, nely).map_err(|e| ApiError::BadRequest(e.to_string()))
}

async fn submit(
    State(st): State<AppState>,
    Query(query): Query<SubmitParams>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let (spec_json, png, params) = if is_png(&headers) {
        (None, Some(body.to_vec()), query)
    } else {
        let b: SubmitBody = parse_json(&body)?;
        let png = b.sketch.as_deref().map(decode_base64).transpose()?;
        (b.spec, png, b.params)
    };

    let spec = match (spec_json, png) {
        (Some(_), Some(_)) => return Err(ApiError::BadRequest("give either spec or sketch, not both".into())),
        (None, None) => return Err(ApiError::BadRequest("missing spec or sketch".into())),
        (Some(value), None) => {
            let mut spec: ProblemSpec = from_value(value)?;
            spec.volfrac = params.volfrac.unwrap_or(spec.volfrac);
            spec.strength = params.strength.unwrap_or(spec.strength);
            spec.seed = params.seed.unwrap_or(spec.seed);
            spec
        }
        (None, Some(png)) => {
            let req = SketchRequest {
                dims: sketch_dims(&params)?,
                volfrac: params.volfrac.unwrap_or(DEFAULT_SKETCH_VOLFRAC),
                strength: params.strength.unwrap_or(0.0),
                seed: params.seed.unwrap_or(0),
                arrow_point: params.arrow_point.unwrap_or_default(),
            };
            spec_from_sketch(&png, req, &st.config)?
        }
    };
    let issues = validate_problem(&spec);
    if !issues.is_empty() {
        return Err(ApiError::issues(&issues));
    }
    let backend = parse_backend(params.backend.as_deref(), BackendKind::Deterministic, &st.config)?;
    let job = enqueue(&st, spec, backend, None, None)?;
    Ok(accepted(&job))
}

#[derive(Debug, Default, Deserialize)]
struct IterateBody {
    backend: Option<String>,
    sketch: Option<String>,
    arrow_point: Option<ArrowPoint>,
    #[serde(flatten)]
    overrides: Map<String, Value>,
}

async fn iterate(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let parent = st
        .store
        .get(&id)
        .ok_or_else(|| ApiError::NotFound(format!("unknown job {id}")))?;
    if parent.state != JobState::Done {
        return Err(ApiError::Conflict(format!(
            "parent job {id} is {:?}, not DONE",
            parent.state
        )));
    }
    let body: IterateBody = if body.iter().all(u8::is_ascii_whitespace) {
        IterateBody::default()
    } else {
        parse_json(&body)?
    };
    let unknown: Vec<String> = body
        .overrides
        .keys()
        .filter(|k| !ITERATE_FIELDS.contains(&k.as_str()))
        .map(|k| format!("`{k}` cannot be overridden on iterate"))
        .collect();
    if !unknown.is_empty() {
        return Err(ApiError::Invalid(unknown));
    }

    // New sketch layers replace the parent's constraints; explicit fields
    // then override either.
    let base_spec = match body.sketch.as_deref() {
        Some(text) => {
            let req = SketchRequest {
                dims: parent.spec.dims,
                volfrac: parent.spec.volfrac,
                strength: parent.spec.strength,
                seed: parent.spec.seed,
                arrow_point: body.arrow_point.unwrap_or_default(),
            };
            spec_from_sketch(&decode_base64(text)?, req, &st.config)?
        }
        None => (*parent.spec).clone(),
    };
    let mut merged = match serde_json::to_value(&base_spec).map_err(ApiError::internal)? {
        Value::Object(map) => map,
        _ => unreachable!("specs serialize as objects"),
    };
    merged.extend(body.overrides);
    let spec: ProblemSpec = from_value(Value::Object(merged))?;
    let issues = validate_problem(&spec);
    if !issues.is_empty() {
        return Err(ApiError::issues(&issues));
    }

    let backend = parse_backend(body.backend.as_deref(), BackendKind::Stochastic, &st.config)?;
    let store = st.store.clone();
    let parent_id = id.clone();
    let base = tokio::task::spawn_blocking(move || store.load_density(&parent_id))
        .await
        .map_err(ApiError::internal)?
        .map_err(ApiError::internal)?;
    let job = enqueue(&st, spec, backend, Some(id), Some(base))?;
    Ok(accepted(&job))
}

fn accepted(job: &Job) -> (StatusCode, Json<Value>) {
    (
        StatusCode::ACCEPTED,
        Json(json!({ "id": job.id, "state": job.state })),
    )
}

/// Records the job and hands it to the worker pool.
fn enqueue(
    st: &AppState,
    spec: ProblemSpec,
    backend: BackendKind,
    parent_id: Option<String>,
    base: Option<DensityField>,
) -> ApiResult<Job> {
    let job = st
        .store
        .submit(spec, backend, parent_id)
        .map_err(ApiError::internal)?;
    let (store, permits, height) = (st.store.clone(), st.permits.clone(), st.config.stl_height);
    let (id, spec, backend) = (job.id.clone(), job.spec.clone(), job.backend.clone());
    tokio::spawn(async move {
        let Ok(_permit) = permits.acquire_owned().await else {
            return;
        };
        if let Err(e) = store.start(&id) {
            tracing::error!("job {id}: {e}");
            return;
        }
        tracing::info!("job {id}: running ({})", backend.label());
        let worker_store = store.clone();
        let worker_id = id.clone();
        let outcome = tokio::task::spawn_blocking(move || {
            match artifacts::run(&spec, &backend, base.as_ref(), height) {
                Ok((result, files)) => worker_store
                    .finish(&worker_id, &result, &files)
                    .map_err(|e| e.to_string()),
                Err(e) => Err(e.to_string()),
            }
        })
        .await
        .unwrap_or_else(|e| Err(format!("worker panicked: {e}")));
        match outcome {
            Ok(()) => tracing::info!("job {id}: done"),
            Err(msg) => {
                tracing::warn!("job {id}: failed: {msg}");
                if let Err(e) = store.fail(&id, msg) {
                    tracing::error!("job {id}: {e}");
                }
            }
        }
    });
    Ok(job)
}

async fn get_job(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<JobView>> {
    st.store
        .get(&id)
        .map(|job| Json(JobView::new(job, true)))
        .ok_or_else(|| ApiError::NotFound(format!("unknown job {id}")))
}

async fn list_jobs(State(st): State<AppState>) -> Json<Vec<JobView>> {
    Json(
        st.store
            .list()
            .into_iter()
            .map(|job| JobView::new(job, false))
            .collect(),
    )
}

async fn get_artifact(
    State(st): State<AppState>,
    Path((id, kind)): Path<(String, String)>,
) -> ApiResult<Response> {
    let job = st
        .store
        .get(&id)
        .ok_or_else(|| ApiError::NotFound(format!("unknown job {id}")))?;
    let Some(name) = artifacts::NAMES.into_iter().find(|n| *n == kind) else {
        return Err(ApiError::NotFound(format!(
            "unknown artifact `{kind}` (expected one of {})",
            artifacts::NAMES.join(", ")
        )));
    };
    if job.state != JobState::Done {
        return Err(ApiError::Conflict(format!("job {id} is {:?}, not DONE", job.state)));
    }
    let store = st.store.clone();
    let bytes = tokio::task::spawn_blocking(move || store.read_artifact(&id, name))
        .await
        .map_err(ApiError::internal)?
        .map_err(ApiError::internal)?;
    Ok(([(header::CONTENT_TYPE, artifacts::content_type(name))], bytes).into_response())
}

// ---------------------------------------------------------------------------
// KLM

#[derive(Deserialize)]
struct KlmQuery {
    workflow: String,
    #[serde(default)]
    n: u64,
}

async fn klm_time(Query(q): Query<KlmQuery>) -> ApiResult<Json<Value>> {
    let workflow = KlmWorkflow::by_name(&q.workflow).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let time = klm::workflow_time(&workflow, q.n, &OperatorTable::default()).map_err(ApiError::internal)?;
    Ok(Json(json!({
        "workflow": workflow.name,
        "iterations": q.n,
        "total_s": time.total_s,
        "per_operator": time.per_operator,
    })))
}

// ---------------------------------------------------------------------------
// Remote generation protocol

#[derive(Deserialize)]
struct GenerateRequest {
    #[serde(flatten)]
    spec: ProblemSpec,
    base: Option<Vec<f64>>,
}

/// Serves one generation synchronously, so this service can act as the
/// remote backend of another instance. With a base field the stochastic
/// backend regenerates from it; without one the deterministic optimizer
/// runs.
async fn generate_now(body: Bytes) -> ApiResult<Json<DensityField>> {
    let req: GenerateRequest = parse_json(&body)?;
    let issues = validate_problem(&req.spec);
    if !issues.is_empty() {
        return Err(ApiError::issues(&issues));
    }
    let base = req
        .base
        .map(|values| DensityField::new(req.spec.dims, values))
        .transpose()
        .map_err(|e| ApiError::Invalid(vec![format!("base: {e}")]))?;
    let backend = if base.is_some() {
        BackendKind::Stochastic
    } else {
        BackendKind::Deterministic
    };
    let spec = req.spec;
    let result = tokio::task::spawn_blocking(move || {
        generate(&spec, &backend, base.as_ref(), &GenerateOptions::default())
    })
    .await
    .map_err(ApiError::internal)?
    .map_err(ApiError::internal)?;
    Ok(Json(result.density))
}
