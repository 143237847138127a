//! HTTP API over the paycheck optimizer: plans, asynchronous training jobs,
//! schedules and baseline comparisons. State lives in files under a data
//! directory; the UI polls job status.

pub mod error;
pub mod jobs;
pub mod store;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use tokio::sync::Semaphore;
use tower_http::cors::CorsLayer;
use uuid::Uuid;

use paycheck_core::goals::PlanConfig;
use paycheck_core::presets::{self, Profile};
use paycheck_core::rates::{bundled_series, RateSeries};

pub use error::{ApiError, ErrorBody};
pub use jobs::{Job, JobRequest, JobStatus};
use store::Store;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Training jobs allowed to run at once.
    pub max_concurrent_jobs: usize,
    /// Historical series used for stochastic jobs.
    pub series: Vec<RateSeries>,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            max_concurrent_jobs: 1,
            series: bundled_series(),
        }
    }
}

pub struct AppState {
    store: Store,
    plans: Mutex<HashMap<Uuid, PlanConfig>>,
    jobs: Mutex<HashMap<Uuid, Job>>,
    limiter: Arc<Semaphore>,
    series: Vec<RateSeries>,
}

type Shared = Arc<AppState>;

impl AppState {
    /// Opens the data directory and reloads persisted plans and jobs. Jobs
    /// that were queued or running when the previous process stopped are
    /// marked failed.
    pub fn open(config: ServiceConfig) -> std::io::Result<Shared> {
        let store = Store::open(&config.data_dir)?;
        let plans: HashMap<Uuid, PlanConfig> = store.plans()?.into_iter().collect();
        let mut jobs: HashMap<Uuid, Job> = store.jobs()?.into_iter().collect();
        for job in jobs.values_mut() {
            if job.status.is_active() {
                job.status = JobStatus::Failed {
                    reason: "interrupted by service restart".into(),
                };
                store.put_job(job.id, job)?;
            }
        }
        Ok(Arc::new(Self {
            store,
            plans: Mutex::new(plans),
            jobs: Mutex::new(jobs),
            limiter: Arc::new(Semaphore::new(config.max_concurrent_jobs.max(1))),
            series: config.series,
        }))
    }

    fn job(&self, id: Uuid) -> Result<Job, ApiError> {
        self.jobs
            .lock()
            .unwrap()
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("job", id))
    }

    /// Applies a forward status change and persists it. Backward moves are
    /// ignored.
    fn set_status(&self, id: Uuid, status: JobStatus, final_value: Option<f64>) {
        let mut jobs = self.jobs.lock().unwrap();
        let Some(job) = jobs.get_mut(&id) else { return };
        if !job.status.can_become(&status) {
            return;
        }
        job.status = status;
        if final_value.is_some() {
            job.final_value = final_value;
        }
        // best effort: the in-memory record stays authoritative while running
        let _ = self.store.put_job(id, job);
    }
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/plans", post(create_plan))
        .route("/plans/{id}", get(get_plan))
        .route("/plans/{id}/jobs", post(start_job))
        .route("/jobs/{id}", get(get_job))
        .route("/jobs/{id}/schedule", get(get_schedule))
        .route("/jobs/{id}/compare", get(get_compare))
        .route("/rates/series", get(list_series))
        .route("/presets", get(list_presets))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Binds `addr` and serves until the process stops.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let state = AppState::open(config)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

fn parse_id(raw: &str, what: &str) -> Result<Uuid, ApiError> {
    Uuid::parse_str(raw).map_err(|_| ApiError::not_found(what, raw))
}

#[derive(Serialize)]
struct PlanBody<'a> {
    id: Uuid,
    plan: &'a PlanConfig,
}

async fn create_plan(State(state): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let text = std::str::from_utf8(&body)
        .map_err(|_| ApiError::bad_request("invalid_plan", "body is not UTF-8"))?;
    let plan = PlanConfig::from_json(text)?;
    let id = Uuid::new_v4();
    state.store.put_plan(id, &plan)?;
    let response = (StatusCode::CREATED, Json(PlanBody { id, plan: &plan })).into_response();
    state.plans.lock().unwrap().insert(id, plan);
    Ok(response)
}

async fn get_plan(
    State(state): State<Shared>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let id = parse_id(&id, "plan")?;
    let plans = state.plans.lock().unwrap();
    let plan = plans
        .get(&id)
        .ok_or_else(|| ApiError::not_found("plan", id))?;
    Ok(Json(PlanBody { id, plan }).into_response())
}

#[derive(Serialize)]
struct JobBody {
    #[serde(flatten)]
    job: Job,
    #[serde(skip_serializing_if = "Option::is_none")]
    links: Option<Links>,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<serde_json::Value>,
}

#[derive(Serialize)]
struct Links {
    schedule: String,
    compare: String,
}

async fn start_job(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let plan_id = parse_id(&id, "plan")?;
    let plan = state
        .plans
        .lock()
        .unwrap()
        .get(&plan_id)
        .cloned()
        .ok_or_else(|| ApiError::not_found("plan", plan_id))?;
    let request: JobRequest = if body.iter().all(u8::is_ascii_whitespace) {
        JobRequest::default()
    } else {
        serde_json::from_slice(&body)
            .map_err(|e| ApiError::bad_request("invalid_job", e.to_string()))?
    };
    request.train.validate().map_err(|e| match e {
        paycheck_core::Error::Config { path, message } => paycheck_core::Error::Config {
            path: format!("train.{path}"),
            message,
        },
        other => other,
    })?;

    let job = {
        let mut jobs = state.jobs.lock().unwrap();
        if let Some(dup) = jobs
            .values()
            .find(|j| j.plan_id == plan_id && j.request == request && j.status.is_active())
        {
            return Err(ApiError::conflict(
                "duplicate_job",
                format!(
                    "job {} with the same configuration is already active",
                    dup.id
                ),
            ));
        }
        let job = Job {
            id: Uuid::new_v4(),
            plan_id,
            request,
            status: JobStatus::Queued,
            final_value: None,
        };
        state.store.put_job(job.id, &job)?;
        jobs.insert(job.id, job.clone());
        job
    };

    tokio::spawn(run(state.clone(), job.id, plan, job.request.clone()));
    let body = JobBody {
        job,
        links: None,
        report: None,
    };
    Ok((StatusCode::ACCEPTED, Json(body)).into_response())
}

async fn run(state: Shared, id: Uuid, plan: PlanConfig, request: JobRequest) {
    let Ok(permit) = state.limiter.clone().acquire_owned().await else {
        return;
    };
    let worker = state.clone();
    let outcome = tokio::task::spawn_blocking(move || {
        worker.set_status(id, JobStatus::Running { iteration: 0 }, None);
        let mut observe = |k: usize, _v: f64| {
            if (k + 1) % 10 == 0 {
                worker.set_status(id, JobStatus::Running { iteration: k + 1 }, None);
            }
            true
        };
        let out = jobs::execute(&plan, &request, &worker.series, &mut observe)
            .map_err(|e| e.to_string())?;
        persist(&worker.store, id, &out).map_err(|e| format!("storage: {e}"))?;
        Ok::<f64, String>(out.trained.report.final_value)
    })
    .await;
    drop(permit);
    match outcome {
        Ok(Ok(v)) => state.set_status(id, JobStatus::Done, Some(v)),
        Ok(Err(reason)) => state.set_status(id, JobStatus::Failed { reason }, None),
        Err(e) => state.set_status(
            id,
            JobStatus::Failed {
                reason: format!("worker panicked: {e}"),
            },
            None,
        ),
    }
}

fn persist(store: &Store, id: Uuid, out: &jobs::JobOutput) -> std::io::Result<()> {
    let mut report = out.trained.report.clone();
    report.checkpoint = Some(store::CHECKPOINT.into());
    store.put_result(id, store::REPORT, &to_json(&report)?)?;
    store.put_result(
        id,
        store::CHECKPOINT,
        &to_json(&out.trained.params.to_checkpoint())?,
    )?;
    store.put_result(id, store::SCHEDULE, &to_json(&out.comparison.learned)?)?;
    store.put_result(id, store::COMPARE, &to_json(&out.comparison)?)?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> std::io::Result<Vec<u8>> {
    serde_json::to_vec(value).map_err(std::io::Error::other)
}

async fn get_job(
    State(state): State<Shared>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let id = parse_id(&id, "job")?;
    let job = state.job(id)?;
    let (links, report) = if job.status == JobStatus::Done {
        let report = serde_json::from_slice(&state.store.result(id, store::REPORT)?)
            .map_err(|e| ApiError::internal(e.to_string()))?;
        let links = Links {
            schedule: format!("/jobs/{id}/schedule"),
            compare: format!("/jobs/{id}/compare"),
        };
        (Some(links), Some(report))
    } else {
        (None, None)
    };
    Ok(Json(JobBody { job, links, report }).into_response())
}

fn finished_result(state: &AppState, raw: &str, name: &str) -> Result<Response, ApiError> {
    let id = parse_id(raw, "job")?;
    let job = state.job(id)?;
    match job.status {
        JobStatus::Done => {}
        JobStatus::Failed { reason } => {
            return Err(ApiError::conflict(
                "job_failed",
                format!("job {id} failed: {reason}"),
            ));
        }
        _ => {
            return Err(ApiError::conflict(
                "job_not_finished",
                format!("job {id} has not finished"),
            ))
        }
    }
    let bytes = state.store.result(id, name)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

async fn get_schedule(
    State(state): State<Shared>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    finished_result(&state, &id, store::SCHEDULE)
}

async fn get_compare(
    State(state): State<Shared>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    finished_result(&state, &id, store::COMPARE)
}

#[derive(Serialize)]
struct SeriesInfo {
    id: String,
    source: String,
    first: Option<String>,
    last: Option<String>,
    months: usize,
}

async fn list_series(State(state): State<Shared>) -> Json<Vec<SeriesInfo>> {
    let out = state
        .series
        .iter()
        .map(|s| SeriesInfo {
            id: s.id.clone(),
            source: s.source.clone(),
            first: s.first_month().map(|m| m.to_string()),
            last: s.last_month().map(|m| m.to_string()),
            months: s.len(),
        })
        .collect();
    Json(out)
}

#[derive(Serialize)]
struct Preset {
    name: &'static str,
    plan: PlanConfig,
}

async fn list_presets() -> Json<Vec<Preset>> {
    let mut out = vec![Preset {
        name: "reference",
        plan: presets::reference_plan(),
    }];
    out.extend(Profile::ALL.iter().map(|p| Preset {
        name: p.as_str(),
        plan: p.plan(),
    }));
    Json(out)
}
