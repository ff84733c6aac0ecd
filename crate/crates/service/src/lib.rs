//! HTTP/JSON front end for the studio: part catalog, asynchronous run jobs
//! with server-sent progress events, and animation frames.
//!
//! Jobs execute the same [`stocklink::runs`] code as the command line and
//! write the same files under `<workdir>/jobs/<id>/`.

pub mod jobs;

use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde::Deserialize;
use serde_json::{json, Value};
use stocklink::catalog::{Availability, Inventory};
use stocklink::curves::{normalize, Curve, NormalizationConfig};
use stocklink::mechanism::MechanismDoc;
use stocklink::objective::{Mode, ObjectiveWeights};
use stocklink::runs::{
    self, GenerateManifest, Manifest, MatchManifest, ProblemSpec, RunError, Solver, TradeoffManifest,
};
use stocklink::search::GaConfig;
use tower_http::services::ServeDir;

pub use jobs::{JobKind, JobSnapshot, JobState, JobTable};

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub inventory: Inventory,
    pub workdir: PathBuf,
    /// Jobs running at the same time.
    pub max_parallel: usize,
    /// Jobs queued or running before submissions are refused.
    pub max_active: usize,
    /// Studio bundle served for non-API paths.
    pub static_dir: Option<PathBuf>,
    /// Minimum spacing of progress events.
    pub event_interval: Duration,
}

impl ServiceConfig {
    pub fn new(inventory: Inventory, workdir: PathBuf) -> Self {
        Self {
            inventory,
            workdir,
            max_parallel: 1,
            max_active: 16,
            static_dir: None,
            event_interval: Duration::from_millis(200),
        }
    }
}

#[derive(Clone)]
struct AppState {
    inventory: Arc<Inventory>,
    jobs: Arc<JobTable>,
    event_interval: Duration,
}

/// JSON error body `{"error": code, "message": text}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn not_found(what: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", format!("{what} not found"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "message": self.message }))).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::bad_request("InvalidRequest", r.body_text())
    }
}

fn run_error(e: RunError) -> ApiError {
    match e {
        RunError::Infeasible(m) => ApiError::bad_request("Infeasible", m),
        other => ApiError::bad_request("InvalidRequest", other.to_string()),
    }
}

pub fn router(config: ServiceConfig) -> Router {
    let state = AppState {
        inventory: Arc::new(config.inventory),
        jobs: Arc::new(JobTable::new(config.workdir, config.max_parallel, config.max_active)),
        event_interval: config.event_interval,
    };
    let api = Router::new()
        .route("/api/parts", get(parts))
        .route("/api/jobs", post(submit))
        .route("/api/jobs/{id}", get(job).delete(cancel))
        .route("/api/jobs/{id}/events", get(events))
        .route("/api/frames", post(frames))
        .route("/api/archives/{id}/stats", get(archive_stats))
        .with_state(state);
    match config.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(config)).await
}

async fn parts(State(state): State<AppState>) -> Json<Value> {
    let inv = &state.inventory;
    let catalog = inv.catalog();
    let parts: Vec<Value> = catalog
        .parts()
        .iter()
        .map(|p| {
            json!({
                "id": p.id,
                "shape": p.shape,
                "name": p.name,
                "holes": p.grid_holes(),
                "hole_count": p.hole_count(),
                "ghg": catalog.ghg_of_part(p),
                "available": Option::<u32>::from(inv.availability(p.id)),
            })
        })
        .collect();
    Json(json!({
        "ghg_per_hole": catalog.ghg_per_hole(),
        "n_types": catalog.len(),
        "max_holes": catalog.max_hole_count(),
        "parts": parts,
    }))
}

/// Problem fields shared by match and tradeoff requests.
#[derive(Deserialize)]
struct ProblemRequest {
    target: Value,
    /// Counts for the server catalog, or an inventory document / reference.
    inventory: Option<Value>,
    #[serde(default)]
    weights: ObjectiveWeights,
    #[serde(default = "one_degree")]
    resolution_deg: f64,
    n_hat: Option<usize>,
}

fn one_degree() -> f64 {
    1.0
}

fn one() -> usize {
    1
}

fn default_solver() -> Solver {
    Solver::Ga
}

fn default_points() -> usize {
    stocklink::curves::DEFAULT_N_HAT
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum JobRequest {
    Match {
        #[serde(flatten)]
        problem: ProblemRequest,
        #[serde(default = "default_solver")]
        solver: Solver,
        budget: usize,
        #[serde(default = "one")]
        repeats: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        ga: GaConfig,
    },
    Tradeoff {
        #[serde(flatten)]
        problem: ProblemRequest,
        budget: usize,
        #[serde(default = "one")]
        repeats: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        ga: GaConfig,
        #[serde(default)]
        end_connections: bool,
    },
    Archive {
        inventory: Option<Value>,
        mechanisms: usize,
        dyads: usize,
        #[serde(default = "default_points")]
        points: usize,
        #[serde(default)]
        seed: u64,
    },
}

impl AppState {
    fn inventory_override(&self, value: Option<Value>) -> Result<Inventory, ApiError> {
        match value {
            None => Ok((*self.inventory).clone()),
            Some(Value::Array(items)) => {
                let counts = items
                    .into_iter()
                    .map(|v| match v {
                        Value::Null => Ok(Availability::Unbounded),
                        v => v
                            .as_u64()
                            .and_then(|n| u32::try_from(n).ok())
                            .map(Availability::Limited)
                            .ok_or_else(|| ApiError::bad_request("InvalidInventory", "counts are integers or null")),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                self.inventory.with_counts(counts).map_err(|e| ApiError::bad_request("InvalidInventory", e.to_string()))
            }
            Some(other) => runs::resolve_inventory(&other).map_err(|e| ApiError::bad_request("InvalidInventory", e.to_string())),
        }
    }

    /// Builds the problem once so that bad targets are refused before queuing.
    fn problem(&self, req: ProblemRequest, mode: Mode) -> Result<ProblemSpec, ApiError> {
        let target: Curve = serde_json::from_value(req.target)
            .map_err(|e| ApiError::bad_request("DegenerateCurve", format!("invalid target curve: {e}")))?;
        let inventory = self.inventory_override(req.inventory)?;
        let mut spec = ProblemSpec::new(&inventory, target);
        spec.weights = req.weights;
        spec.resolution_deg = req.resolution_deg;
        if let Some(n) = req.n_hat {
            spec.n_hat = n;
        }
        let cfg = NormalizationConfig::new(spec.n_hat).map_err(|e| ApiError::bad_request("InvalidRequest", e.to_string()))?;
        normalize(&spec.target, &cfg).map_err(|e| ApiError::bad_request("DegenerateCurve", e.to_string()))?;
        spec.build(mode).map_err(run_error)?;
        Ok(spec)
    }
}

async fn submit(
    State(state): State<AppState>,
    body: Result<Json<Value>, JsonRejection>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let Json(body) = body?;
    let request: JobRequest =
        serde_json::from_value(body).map_err(|e| ApiError::bad_request("InvalidRequest", e.to_string()))?;
    let (kind, manifest, budget) = match request {
        JobRequest::Match { problem, solver, budget, repeats, seed, ga } => {
            let problem = state.problem(problem, Mode::Single)?;
            check_runs(budget, repeats, &ga)?;
            (JobKind::Match, Manifest::Match(MatchManifest { problem, solver, budget, repeats, ga, seed }), budget * repeats)
        }
        JobRequest::Tradeoff { problem, budget, repeats, seed, ga, end_connections } => {
            let problem = state.problem(problem, Mode::Multi)?;
            check_runs(budget, repeats, &ga)?;
            let m = TradeoffManifest { problem, budget, repeats, ga, seed, end_connections };
            (JobKind::Tradeoff, Manifest::Tradeoff(m), budget * repeats)
        }
        JobRequest::Archive { inventory, mechanisms, dyads, points, seed } => {
            let inventory = state.inventory_override(inventory)?;
            if dyads == 0 || points < 8 {
                return Err(ApiError::bad_request("InvalidRequest", "dyads must be at least 1 and points at least 8"));
            }
            let m = GenerateManifest {
                inventory: inventory.to_json_value(),
                mechanisms,
                dyads,
                points,
                resolution_deg: 1.0,
                max_retries: 100,
                seed,
            };
            (JobKind::Archive, Manifest::Generate(m), mechanisms)
        }
    };
    let id = state
        .jobs
        .submit(kind, manifest, budget)
        .map_err(|_| ApiError::new(StatusCode::CONFLICT, "OverCapacity", "too many active jobs"))?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "id": id }))))
}

fn check_runs(budget: usize, repeats: usize, ga: &GaConfig) -> Result<(), ApiError> {
    if budget == 0 || repeats == 0 {
        return Err(ApiError::bad_request("InvalidRequest", "budget and repeats must be at least 1"));
    }
    ga.validate().map_err(|e| ApiError::bad_request("InvalidRequest", e.to_string()))
}

async fn job(State(state): State<AppState>, Path(id): Path<u64>) -> Result<Json<JobSnapshot>, ApiError> {
    state.jobs.snapshot(id).map(Json).ok_or_else(|| ApiError::not_found("job"))
}

async fn cancel(State(state): State<AppState>, Path(id): Path<u64>) -> Result<Json<JobSnapshot>, ApiError> {
    state.jobs.cancel(id).map(Json).ok_or_else(|| ApiError::not_found("job"))
}

fn progress_event(s: &JobSnapshot) -> Event {
    let mut data = json!({ "evaluations": s.evaluations, "budget": s.budget, "best_f_kin": s.best_f_kin });
    if let Some(front) = &s.pareto {
        data["pareto"] = json!(front);
    }
    Event::default().event("progress").data(data.to_string())
}

fn terminal_event(s: &JobSnapshot) -> Event {
    let name = serde_json::to_value(s.state).expect("state serializes");
    let data = json!({
        "state": s.state,
        "evaluations": s.evaluations,
        "best_f_kin": s.best_f_kin,
        "result": s.result,
        "error": s.error,
    });
    Event::default().event(name.as_str().unwrap_or("done")).data(data.to_string())
}

/// Progress events at most every `event_interval`, then one terminal event
/// named after the final state.
async fn events(
    State(state): State<AppState>,
    Path(id): Path<u64>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let rx = state.jobs.subscribe(id).ok_or_else(|| ApiError::not_found("job"))?;
    let interval = state.event_interval;
    let stream = stream::unfold(Some((rx, true)), move |st| async move {
        let (mut rx, first) = st?;
        if !first {
            tokio::time::sleep(interval).await;
            if !rx.borrow().state.is_terminal() && rx.changed().await.is_err() {
                return None;
            }
        }
        let snapshot = rx.borrow_and_update().clone();
        if snapshot.state.is_terminal() {
            Some((Ok(terminal_event(&snapshot)), None))
        } else {
            Some((Ok(progress_event(&snapshot)), Some((rx, false))))
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

#[derive(Deserialize)]
struct FramesRequest {
    mechanism: MechanismDoc,
    catalog: Option<Value>,
    #[serde(default = "one_degree")]
    resolution_deg: f64,
    n_hat: Option<usize>,
}

async fn frames(
    State(state): State<AppState>,
    body: Result<Json<FramesRequest>, JsonRejection>,
) -> Result<Json<runs::RenderOutput>, ApiError> {
    let Json(req) = body.map_err(|r| ApiError::bad_request("InvalidMechanism", r.body_text()))?;
    let catalog = match &req.catalog {
        Some(v) => runs::resolve_catalog(v).map_err(|e| ApiError::bad_request("InvalidCatalog", e.to_string()))?,
        None => state.inventory.catalog().clone(),
    };
    let n_hat = req.n_hat.unwrap_or(stocklink::curves::DEFAULT_N_HAT);
    let resolution = req.resolution_deg;
    let out = tokio::task::spawn_blocking(move || runs::render(&catalog, &req.mechanism, resolution, n_hat))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))?
        .map_err(|e| ApiError::bad_request("InvalidMechanism", e.to_string()))?;
    Ok(Json(out))
}

async fn archive_stats(State(state): State<AppState>, Path(id): Path<u64>) -> Result<Json<Value>, ApiError> {
    let snapshot = state.jobs.snapshot(id).ok_or_else(|| ApiError::not_found("archive"))?;
    if snapshot.kind != JobKind::Archive {
        return Err(ApiError::not_found("archive"));
    }
    if snapshot.state != JobState::Done {
        return Err(ApiError::new(StatusCode::CONFLICT, "NotReady", format!("archive job is {:?}", snapshot.state)));
    }
    let path = state.jobs.job_dir(id).join(runs::ARCHIVE_FILE);
    let stats = tokio::task::spawn_blocking(move || runs::archive_file_stats(&path))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))?
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))?;
    Ok(Json(serde_json::to_value(stats).expect("stats serialize")))
}
