//! REST API over a fitted model and its cohort.
//!
//! All endpoints are `GET` under `/api/` and answer JSON; failures carry
//! `{code, message, detail}` with a stable `code`.

mod config;

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use axum::extract::{OriginalUri, Path, Query, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{load_model, load_report, ArtifactError, SCHEMA_VERSION};
use crate::cdm::{ingest_cohort, CdmError, Cohort, FeatureDef};
use crate::enrichment::{find_predictors_and_markers, EnrichOptions, EnrichmentReport, Phase, Role};
use crate::trajectory::{TrajectoryLabel, TrajectoryModel};
use crate::views::{
    analysis_bundle, indicator_glyphs, patient_series, trajectory_map, ColorBy, IndicatorGlyphs, ViewError,
    DEFAULT_AGE_BIN_YEARS, DEFAULT_GLYPH_BIN_YEARS,
};

pub use config::{ServiceConfig, CONFIG_ENV, DEFAULT_HOST, DEFAULT_PORT};

pub const DEFAULT_PAGE_LIMIT: usize = 100;
pub const MAX_PAGE_LIMIT: usize = 10_000;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error("cohort: {0}")]
    Cohort(#[from] CdmError),
    #[error("model does not match the cohort: {0}")]
    Mismatch(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
    pub detail: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status: status.as_u16(), code: code.into(), message: message.into(), detail: None }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn unknown_patient(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_patient", format!("no patient with id {id:?}"))
    }
}

impl From<ViewError> for ApiError {
    fn from(e: ViewError) -> Self {
        match e {
            ViewError::UnknownPatient(id) => ApiError::unknown_patient(&id),
            ViewError::UnknownFeature(code) => {
                ApiError::new(StatusCode::NOT_FOUND, "unknown_feature", format!("no feature with code {code:?}"))
            }
            ViewError::Invalid(msg) => ApiError::bad_request(msg),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, json_body(&self)).into_response()
    }
}

fn json_body<T: Serialize>(value: &T) -> Response {
    let body = serde_json::to_vec(value).expect("payloads serialize");
    ([(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))], body).into_response()
}

type ApiResult = Result<Response, ApiError>;
type Params = Query<HashMap<String, String>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientSummary {
    pub patient_id: String,
    pub sex: String,
    pub race: String,
    pub n_encounters: usize,
    /// Ages at first and last encounter.
    pub age_range: Option<[f64; 2]>,
    pub trajectory: Option<TrajectoryLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTag {
    pub feature_code: String,
    pub trajectory: TrajectoryLabel,
    pub role: Role,
    pub phase: Phase,
    pub q_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorPanel {
    #[serde(flatten)]
    pub glyphs: IndicatorGlyphs,
    /// Significant predictor/marker results for the features in the panel.
    pub tags: Vec<FeatureTag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub schema_version: u32,
    pub patients: usize,
    pub encounters: usize,
    pub visits: usize,
    pub landmarks: usize,
    pub branches: usize,
    pub trajectories: Vec<TrajectoryLabel>,
    pub significant_results: usize,
}

/// Glyphs of a patient tagged with the significant enrichment results for
/// the features shown.
pub fn indicator_panel(cohort: &Cohort, report: &EnrichmentReport, patient_id: &str, bin: f64) -> Result<IndicatorPanel, ViewError> {
    let glyphs = indicator_glyphs(cohort, patient_id, bin)?;
    let tags = glyphs
        .row_order
        .iter()
        .flat_map(|code| {
            report.results.iter().filter(move |r| r.significant && &r.feature_code == code).map(|r| FeatureTag {
                feature_code: r.feature_code.clone(),
                trajectory: r.trajectory,
                role: r.role,
                phase: r.phase,
                q_value: r.q_value,
            })
        })
        .collect();
    Ok(IndicatorPanel { glyphs, tags })
}

/// Immutable state shared by all requests.
pub struct AppState {
    pub model: TrajectoryModel,
    pub cohort: Cohort,
    pub report: EnrichmentReport,
    summaries: Vec<PatientSummary>,
}

impl AppState {
    pub fn new(model: TrajectoryModel, cohort: Cohort, report: EnrichmentReport) -> Result<Self, ServiceError> {
        let known: BTreeSet<(&str, &str)> =
            cohort.encounters().iter().map(|e| (e.patient_id.as_str(), e.encounter_id.as_str())).collect();
        if let Some(v) = model.visits.iter().find(|v| !known.contains(&(v.patient_id.as_str(), v.encounter_id.as_str()))) {
            return Err(ServiceError::Mismatch(format!(
                "visit ({}, {}) is not in the cohort",
                v.patient_id, v.encounter_id
            )));
        }
        let memberships = model.memberships();
        let summaries = cohort
            .patients()
            .iter()
            .map(|p| {
                let enc = cohort.encounters_of(&p.patient_id);
                PatientSummary {
                    patient_id: p.patient_id.clone(),
                    sex: p.sex.to_string(),
                    race: p.race.clone(),
                    n_encounters: enc.len(),
                    age_range: enc.first().zip(enc.last()).map(|(a, b)| [a.age(), b.age()]),
                    trajectory: memberships.get(&p.patient_id).copied(),
                }
            })
            .collect();
        Ok(Self { model, cohort, report, summaries })
    }

    pub fn load(config: &ServiceConfig) -> Result<Self, ServiceError> {
        config.validate()?;
        let files = config.cohort_files()?;
        let cohort = ingest_cohort(&files.patients, &files.observations, &files.catalog)?;
        let model = load_model(&config.model_artifact_path)?;
        let report = match &config.enrichment_report_path {
            Some(p) => load_report(p)?,
            None => find_predictors_and_markers(&model, &cohort, &EnrichOptions::default()),
        };
        Self::new(model, cohort, report)
    }

    fn require_patient(&self, id: &str) -> Result<(), ApiError> {
        match self.cohort.patient(id) {
            Some(_) => Ok(()),
            None => Err(ApiError::unknown_patient(id)),
        }
    }
}

fn parse_param<T: std::str::FromStr>(q: &HashMap<String, String>, key: &str) -> Result<Option<T>, ApiError>
where
    T::Err: std::fmt::Display,
{
    match q.get(key).map(|s| s.trim()).filter(|s| !s.is_empty()) {
        None => Ok(None),
        Some(s) => s
            .parse::<T>()
            .map(Some)
            .map_err(|e| ApiError::bad_request(format!("invalid {key} parameter {s:?}")).with_detail(e.to_string())),
    }
}

async fn health(State(s): State<Arc<AppState>>) -> ApiResult {
    Ok(json_body(&Health {
        status: "ok".into(),
        schema_version: SCHEMA_VERSION,
        patients: s.cohort.patients().len(),
        encounters: s.cohort.encounters().len(),
        visits: s.model.visits.len(),
        landmarks: s.model.tree.len(),
        branches: s.model.branches.len(),
        trajectories: s.model.named_trajectories(),
        significant_results: s.report.significant_count(),
    }))
}

async fn catalog(State(s): State<Arc<AppState>>) -> ApiResult {
    let features: Vec<&FeatureDef> = s.cohort.catalog().features().iter().collect();
    Ok(json_body(&features))
}

async fn patients(State(s): State<Arc<AppState>>, Query(q): Params) -> ApiResult {
    let limit: usize = parse_param(&q, "limit")?.unwrap_or(DEFAULT_PAGE_LIMIT);
    if limit == 0 || limit > MAX_PAGE_LIMIT {
        return Err(ApiError::bad_request(format!("limit must be in 1..={MAX_PAGE_LIMIT}")));
    }
    let offset: usize = parse_param(&q, "offset")?.unwrap_or(0);
    let needle = q.get("q").map(|s| s.trim()).unwrap_or("");
    let matching: Vec<&PatientSummary> = s.summaries.iter().filter(|p| p.patient_id.contains(needle)).collect();
    let page: Vec<&PatientSummary> = matching.iter().skip(offset).take(limit).copied().collect();
    let mut resp = json_body(&page);
    resp.headers_mut().insert("x-total-count", HeaderValue::from(matching.len()));
    Ok(resp)
}

async fn profile(State(s): State<Arc<AppState>>, Path(id): Path<String>, Query(q): Params) -> ApiResult {
    s.require_patient(&id)?;
    let raw = q.get("indicators").map(String::as_str).unwrap_or(crate::cdm::EGFR);
    let codes: Vec<&str> = raw.split(',').map(str::trim).filter(|c| !c.is_empty()).collect();
    Ok(json_body(&patient_series(&s.cohort, &id, &codes)?))
}

async fn map(State(s): State<Arc<AppState>>, Query(q): Params) -> ApiResult {
    let color_by: ColorBy = parse_param(&q, "color_by")?.unwrap_or_default();
    let highlight = q.get("highlight").map(|h| h.trim()).filter(|h| !h.is_empty());
    if let Some(h) = highlight {
        s.require_patient(h)?;
    }
    Ok(json_body(&trajectory_map(&s.model, color_by, highlight)?))
}

async fn indicators(State(s): State<Arc<AppState>>, Path(id): Path<String>, Query(q): Params) -> ApiResult {
    s.require_patient(&id)?;
    let bin: f64 = parse_param(&q, "bin")?.unwrap_or(DEFAULT_GLYPH_BIN_YEARS);
    Ok(json_body(&indicator_panel(&s.cohort, &s.report, &id, bin)?))
}

async fn analysis(State(s): State<Arc<AppState>>, Path(id): Path<String>, Query(q): Params) -> ApiResult {
    s.require_patient(&id)?;
    let bin: f64 = parse_param(&q, "bin")?.unwrap_or(DEFAULT_AGE_BIN_YEARS);
    Ok(json_body(&analysis_bundle(&s.model, &s.cohort, &id, bin)?))
}

async fn enrichment(State(s): State<Arc<AppState>>, Query(q): Params) -> ApiResult {
    let trajectory: Option<TrajectoryLabel> = parse_param(&q, "trajectory")?;
    let phase: Option<Phase> = parse_param(&q, "phase")?;
    Ok(json_body(&s.report.filter(trajectory, phase)))
}

async fn api_not_found(OriginalUri(uri): OriginalUri) -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no endpoint at {}", uri.path()))
}

async fn log_request(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    let uri = req.uri().clone();
    let start = std::time::Instant::now();
    let resp = next.run(req).await;
    log::info!("{method} {uri} {} {:?}", resp.status().as_u16(), start.elapsed());
    resp
}

pub fn router(state: Arc<AppState>, static_assets: Option<&std::path::Path>, request_log: bool) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/catalog", get(catalog))
        .route("/patients", get(patients))
        .route("/patient/{id}/profile", get(profile))
        .route("/patient/{id}/indicators", get(indicators))
        .route("/patient/{id}/analysis", get(analysis))
        .route("/trajectory/map", get(map))
        .route("/enrichment", get(enrichment))
        .fallback(api_not_found)
        .with_state(state);
    let mut app = Router::new().nest("/api", api);
    app = match static_assets {
        Some(dir) => app.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => app.fallback(api_not_found),
    };
    if request_log {
        app = app.layer(middleware::from_fn(log_request));
    }
    app
}

/// Loads state, binds and serves until interrupted.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let state = Arc::new(AppState::load(&config)?);
    let addr = config.addr()?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    let app = router(state, config.static_assets_path.as_deref(), config.request_log);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
