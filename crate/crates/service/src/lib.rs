//! JSON-over-HTTP API over a loaded city cohort.
//!
//! | route                           | body                              |
//! |---------------------------------|-----------------------------------|
//! | `GET /api/health`               | `{status, version, loaded}`       |
//! | `GET /api/cities`               | list of [`CitySummary`]           |
//! | `GET /api/plane?dependent=..`   | planning plane                    |
//! | `POST /api/scenario`            | scenario outcome                  |
//! | `GET /api/spectrum?city_id=..`  | list of spectrum bands            |
//!
//! `/api/plane` also takes optional `variogram` and `grid` parameters.
//! Errors are `{"code": .., "message": ..}` with a stable `code`. Every
//! response carries `X-Urbscale-Version`. Anything outside `/api/` is served
//! from the configured static directory, if any.

use std::collections::BTreeMap;
use std::future::Future;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, OnceLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Query, State};
use axum::http::{HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tower_http::services::ServeDir;
use tower_http::set_header::SetResponseHeaderLayer;
use urbscale_core::cohort::{Cohort, Dependent};
use urbscale_core::ingest::ValidationStatus;
use urbscale_core::plane::{build_plane_with, PlaneConfig, PlaneError, PlanningPlane, VariogramKind, DEFAULT_GRID};
use urbscale_core::scaling::{city_spectrum, SpectrumBand, DEFAULT_SPECTRUM_BINS};
use urbscale_core::scenario::{evaluate_scenario_with, ScenarioDelta, ScenarioOutcome};

/// Version of the `/api/` schemas, sent as `X-Urbscale-Version`.
pub const API_VERSION: &str = "1";
pub const VERSION_HEADER: &str = "x-urbscale-version";
/// Largest grid side accepted from a request.
pub const MAX_GRID: usize = 400;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: impl Into<String>, message: impl Into<String>) -> Self {
        ApiError { status, code: code.into(), message: message.into() }
    }

    fn not_loaded() -> Self {
        ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "not-loaded", "the city cohort is still loading")
    }

    fn unknown_city(city_id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "unknown-city", format!("no city `{city_id}`"))
    }

    fn unprocessable(code: &str, message: impl ToString) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, message.to_string())
    }
}

impl From<PlaneError> for ApiError {
    fn from(e: PlaneError) -> Self {
        ApiError::unprocessable(e.code(), e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self)).into_response()
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub variogram: VariogramKind,
    pub grid: usize,
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { variogram: VariogramKind::default(), grid: DEFAULT_GRID, static_dir: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct PlaneKey {
    dependent: Dependent,
    kind: VariogramKind,
    nx: usize,
    ny: usize,
}

type PlaneSlot = Arc<OnceLock<Result<Arc<PlanningPlane>, ApiError>>>;

/// The loaded cohort plus lazily built planes.
///
/// The cohort is set once; each plane is built at most once per key and
/// then shared.
pub struct SessionState {
    snapshot: OnceLock<Arc<Cohort>>,
    planes: Mutex<BTreeMap<PlaneKey, PlaneSlot>>,
    config: ServiceConfig,
}

impl SessionState {
    pub fn new(config: ServiceConfig) -> Self {
        SessionState { snapshot: OnceLock::new(), planes: Mutex::new(BTreeMap::new()), config }
    }

    pub fn with_cohort(config: ServiceConfig, cohort: Cohort) -> Self {
        let state = SessionState::new(config);
        let _ = state.snapshot.set(Arc::new(cohort));
        state
    }

    /// Installs the cohort; returns false if one was already loaded.
    pub fn load(&self, cohort: Cohort) -> bool {
        self.snapshot.set(Arc::new(cohort)).is_ok()
    }

    pub fn is_loaded(&self) -> bool {
        self.snapshot.get().is_some()
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn cohort(&self) -> Result<Arc<Cohort>, ApiError> {
        self.snapshot.get().cloned().ok_or_else(ApiError::not_loaded)
    }

    fn plane(&self, key: PlaneKey) -> Result<Arc<PlanningPlane>, ApiError> {
        let cohort = self.cohort()?;
        let slot = self.planes.lock().unwrap_or_else(|p| p.into_inner()).entry(key).or_default().clone();
        slot.get_or_init(|| {
            let samples = cohort.plane_samples(key.dependent);
            let config = PlaneConfig { nx: key.nx, ny: key.ny, kind: key.kind, ..Default::default() };
            log::info!("building {} plane from {} cities", key.dependent, samples.len());
            build_plane_with(&samples, &config).map(Arc::new).map_err(ApiError::from)
        })
        .clone()
    }
}

/// Runs blocking work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())))
}

#[derive(Debug, Serialize)]
struct Health {
    status: &'static str,
    version: &'static str,
    loaded: bool,
}

async fn health(State(state): State<Arc<SessionState>>) -> Json<Health> {
    Json(Health { status: "ok", version: API_VERSION, loaded: state.is_loaded() })
}

/// One row of `GET /api/cities`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitySummary {
    pub city_id: String,
    pub status: ValidationStatus,
    pub ds: Option<f64>,
    pub mean_density: Option<f64>,
    pub gas_per_area: Option<f64>,
    pub co2_per_capita: Option<f64>,
    /// Error code when the indicator could not be computed.
    pub error: Option<String>,
}

async fn cities(State(state): State<Arc<SessionState>>) -> Result<Json<Vec<CitySummary>>, ApiError> {
    let cohort = state.cohort()?;
    let rows = cohort
        .indicator_table()
        .into_iter()
        .map(|r| CitySummary {
            city_id: r.city_id,
            status: r.status,
            ds: r.ds,
            mean_density: r.mean_density,
            gas_per_area: r.gas_per_area,
            co2_per_capita: r.co2_per_capita,
            error: r.error,
        })
        .collect();
    Ok(Json(rows))
}

#[derive(Debug, Deserialize)]
struct PlaneQuery {
    dependent: Option<String>,
    variogram: Option<String>,
    grid: Option<usize>,
}

fn parse_dependent(raw: Option<&str>) -> Result<Dependent, ApiError> {
    let raw = raw.unwrap_or(Dependent::GasPerArea.as_str());
    raw.parse().map_err(|e: String| ApiError::new(StatusCode::BAD_REQUEST, "unknown-dependent", e))
}

async fn plane(
    State(state): State<Arc<SessionState>>,
    query: Result<Query<PlaneQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(q) = query.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad-query", e.body_text()))?;
    let dependent = parse_dependent(q.dependent.as_deref())?;
    let kind = match q.variogram {
        Some(v) => v.parse().map_err(|e: String| ApiError::new(StatusCode::BAD_REQUEST, "unknown-variogram", e))?,
        None => state.config.variogram,
    };
    let grid = q.grid.unwrap_or(state.config.grid);
    if !(2..=MAX_GRID).contains(&grid) {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "invalid-grid", format!("grid must be between 2 and {MAX_GRID}")));
    }
    let key = PlaneKey { dependent, kind, nx: grid, ny: grid };
    let plane = blocking(move || state.plane(key)).await?;
    Ok(Json(&*plane).into_response())
}

/// Body of `POST /api/scenario`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRequest {
    pub city_id: String,
    #[serde(default)]
    pub delta: ScenarioDelta,
    /// Defaults to `gas_per_area`.
    pub dependent: Option<String>,
}

async fn scenario(
    State(state): State<Arc<SessionState>>,
    body: Result<Json<ScenarioRequest>, JsonRejection>,
) -> Result<Json<ScenarioOutcome>, ApiError> {
    let Json(req) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed-request", e.body_text()))?;
    let dependent = parse_dependent(req.dependent.as_deref())?;
    let cohort = state.cohort()?;
    let base = cohort.city(&req.city_id).ok_or_else(|| ApiError::unknown_city(&req.city_id))?.dataset.clone();
    let key = PlaneKey { dependent, kind: state.config.variogram, nx: state.config.grid, ny: state.config.grid };
    let options = cohort.options().indicator;
    let outcome = blocking(move || {
        let plane = state.plane(key)?;
        evaluate_scenario_with(&base, &req.delta, &plane, &options).map_err(|e| ApiError::unprocessable(e.code(), e))
    })
    .await?;
    Ok(Json(outcome))
}

#[derive(Debug, Deserialize)]
struct SpectrumQuery {
    city_id: Option<String>,
}

async fn spectrum(
    State(state): State<Arc<SessionState>>,
    query: Result<Query<SpectrumQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Json<Vec<SpectrumBand>>, ApiError> {
    let Query(q) = query.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad-query", e.body_text()))?;
    let city_id = q.city_id.ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "bad-query", "missing city_id"))?;
    let cohort = state.cohort()?;
    let entry = cohort.city(&city_id).ok_or_else(|| ApiError::unknown_city(&city_id))?;
    let classes = cohort.options().indicator.classes;
    city_spectrum(&entry.dataset, classes, DEFAULT_SPECTRUM_BINS)
        .map(Json)
        .map_err(|e| ApiError::unprocessable(e.code(), e))
}

async fn api_not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not-found", "no such endpoint")
}

pub fn router(state: Arc<SessionState>) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/cities", get(cities))
        .route("/plane", get(plane))
        .route("/scenario", post(scenario))
        .route("/spectrum", get(spectrum))
        .fallback(api_not_found)
        .with_state(state.clone());
    let mut app = Router::new().nest("/api", api);
    if let Some(dir) = &state.config.static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    app.layer(SetResponseHeaderLayer::overriding(
        HeaderName::from_static(VERSION_HEADER),
        HeaderValue::from_static(API_VERSION),
    ))
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    listener: TcpListener,
    state: Arc<SessionState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
