use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use uuid::Uuid;

use paycheck_core::presets;
use paycheck_service::store::Store;
use paycheck_service::{router, AppState, Job, JobRequest, JobStatus, ServiceConfig};

fn app(dir: &std::path::Path) -> Router {
    router(AppState::open(ServiceConfig::new(dir)).unwrap())
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let request = Request::builder().method(method).uri(uri);
    let request = match body {
        Some(v) => request
            .header("content-type", "application/json")
            .body(Body::from(v.to_string())),
        None => request.body(Body::empty()),
    }
    .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes)
            .unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

/// The reference household cut to one year, so jobs finish quickly.
fn short_plan() -> Value {
    let mut plan = presets::reference_plan();
    plan.horizon_months = 12;
    serde_json::to_value(plan).unwrap()
}

async fn create_plan(app: &Router, plan: Value) -> String {
    let (status, body) = call(app, Method::POST, "/plans", Some(plan)).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["id"].as_str().unwrap().to_string()
}

async fn wait_for_finish(app: &Router, job: &str) -> Value {
    for _ in 0..1200 {
        let (status, body) = call(app, Method::GET, &format!("/jobs/{job}"), None).await;
        assert_eq!(status, StatusCode::OK);
        match body["status"]["state"].as_str().unwrap() {
            "done" | "failed" => return body,
            _ => tokio::time::sleep(Duration::from_millis(50)).await,
        }
    }
    panic!("job {job} did not finish");
}

#[tokio::test]
async fn plan_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = create_plan(&app, short_plan()).await;
    let (status, body) = call(&app, Method::GET, &format!("/plans/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["plan"], short_plan());
    assert_eq!(body["id"], id.as_str());
}

#[tokio::test]
async fn invalid_plans_are_rejected_with_a_path() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());

    let mut plan = short_plan();
    plan["goals"] = json!([]);
    let (status, body) = call(&app, Method::POST, "/plans", Some(plan)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "invalid_config");
    assert_eq!(body["path"], "goals");

    let mut plan = short_plan();
    let retirement = plan["goals"][4].clone();
    let mut second = retirement.clone();
    second["id"] = json!("retirement_2");
    plan["goals"].as_array_mut().unwrap().push(second);
    let (status, body) = call(&app, Method::POST, "/plans", Some(plan)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(
        body["path"].as_str().unwrap().starts_with("goals"),
        "{body}"
    );

    let mut plan = short_plan();
    plan["initial_income"] = json!(-5.0);
    let (status, body) = call(&app, Method::POST, "/plans", Some(plan)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["path"], "initial_income");

    let (status, body) = call(&app, Method::POST, "/plans", Some(json!("not a plan"))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "invalid_config");
}

#[tokio::test]
async fn unknown_ids_are_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let missing = Uuid::new_v4();
    for uri in [
        format!("/plans/{missing}"),
        format!("/jobs/{missing}"),
        format!("/jobs/{missing}/schedule"),
        "/plans/not-a-uuid".to_string(),
    ] {
        let (status, body) = call(&app, Method::GET, &uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(body["code"], "not_found");
    }
    let (status, _) = call(&app, Method::POST, &format!("/plans/{missing}/jobs"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn job_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let plan = create_plan(&app, short_plan()).await;

    let request = json!({"train": {"iterations": 2000, "seed": 3}});
    let (status, job) = call(
        &app,
        Method::POST,
        &format!("/plans/{plan}/jobs"),
        Some(request.clone()),
    )
    .await;
    assert_eq!(status, StatusCode::ACCEPTED, "{job}");
    let id = job["id"].as_str().unwrap().to_string();
    assert_eq!(job["plan_id"], plan.as_str());
    assert_eq!(job["status"]["state"], "queued");

    // the same configuration cannot be queued twice while the first is active
    let (status, body) = call(
        &app,
        Method::POST,
        &format!("/plans/{plan}/jobs"),
        Some(request),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "duplicate_job");

    let (status, body) = call(&app, Method::GET, &format!("/jobs/{id}/schedule"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "job_not_finished");

    let done = wait_for_finish(&app, &id).await;
    assert_eq!(done["status"]["state"], "done", "{done}");
    assert_eq!(done["links"]["schedule"], format!("/jobs/{id}/schedule"));
    assert_eq!(done["report"]["iterations"], 2000);
    assert_eq!(done["report"]["values"].as_array().unwrap().len(), 2000);
    assert_eq!(done["final_value"], done["report"]["final_value"]);

    let (status, schedule) = call(&app, Method::GET, &format!("/jobs/{id}/schedule"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(schedule["rows"].as_array().unwrap().len(), 13);
    assert_eq!(schedule["goal_ids"][0], "credit_card");

    let (status, compare) = call(&app, Method::GET, &format!("/jobs/{id}/compare"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(compare["learned"], schedule);
    for key in ["waterfall", "even_split"] {
        assert!(compare[key]["total_utility"].is_number(), "{key}");
    }

    // a finished job no longer blocks an identical one
    let (status, _) = call(
        &app,
        Method::POST,
        &format!("/plans/{plan}/jobs"),
        Some(json!({"train": {"iterations": 2000, "seed": 3}})),
    )
    .await;
    assert_eq!(status, StatusCode::ACCEPTED);
}

#[tokio::test]
async fn identical_jobs_produce_identical_schedules() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let mut schedules = Vec::new();
    for _ in 0..2 {
        let plan = create_plan(&app, short_plan()).await;
        let (status, job) = call(
            &app,
            Method::POST,
            &format!("/plans/{plan}/jobs"),
            Some(json!({"train": {"iterations": 150, "seed": 11}})),
        )
        .await;
        assert_eq!(status, StatusCode::ACCEPTED);
        let id = job["id"].as_str().unwrap().to_string();
        assert_eq!(wait_for_finish(&app, &id).await["status"]["state"], "done");
        let request = Request::get(format!("/jobs/{id}/schedule"))
            .body(Body::empty())
            .unwrap();
        let response = app.clone().oneshot(request).await.unwrap();
        schedules.push(response.into_body().collect().await.unwrap().to_bytes());
    }
    assert_eq!(schedules[0], schedules[1]);
}

#[tokio::test]
async fn bad_job_requests_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let plan = create_plan(&app, short_plan()).await;
    let uri = format!("/plans/{plan}/jobs");

    let (status, body) = call(
        &app,
        Method::POST,
        &uri,
        Some(json!({"train": {"iterations": 0}})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["path"], "train.iterations");

    let (status, body) = call(&app, Method::POST, &uri, Some(json!({"bogus": 1}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "invalid_job");
}

#[tokio::test]
async fn failed_jobs_report_their_reason() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    // a series-driven plan cannot be trained with constant rates
    let mut plan = presets::stochastic(presets::reference_plan());
    plan.horizon_months = 12;
    let plan = create_plan(&app, serde_json::to_value(plan).unwrap()).await;
    let (status, job) = call(
        &app,
        Method::POST,
        &format!("/plans/{plan}/jobs"),
        Some(json!({"train": {"iterations": 5}})),
    )
    .await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let id = job["id"].as_str().unwrap().to_string();
    let finished = wait_for_finish(&app, &id).await;
    assert_eq!(finished["status"]["state"], "failed");
    assert!(finished["status"]["reason"]
        .as_str()
        .unwrap()
        .contains("stochastic"));

    let (status, body) = call(&app, Method::GET, &format!("/jobs/{id}/compare"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "job_failed");
}

#[tokio::test]
async fn stochastic_jobs_use_the_bundled_series() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let mut plan = presets::stochastic(presets::reference_plan());
    plan.horizon_months = 12;
    let plan = create_plan(&app, serde_json::to_value(plan).unwrap()).await;
    let (status, job) = call(
        &app,
        Method::POST,
        &format!("/plans/{plan}/jobs"),
        Some(json!({"train": {"iterations": 20, "mode": "stochastic_rates", "batch_size": 2}, "eval_start": "2015-03"})),
    )
    .await;
    assert_eq!(status, StatusCode::ACCEPTED, "{job}");
    let id = job["id"].as_str().unwrap().to_string();
    let finished = wait_for_finish(&app, &id).await;
    assert_eq!(finished["status"]["state"], "done", "{finished}");
    assert_eq!(finished["report"]["mode"], "stochastic_rates");
}

#[tokio::test]
async fn restart_fails_interrupted_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let job = Job {
        id: Uuid::new_v4(),
        plan_id: Uuid::new_v4(),
        request: JobRequest::default(),
        status: JobStatus::Running { iteration: 40 },
        final_value: None,
    };
    store.put_job(job.id, &job).unwrap();

    let app = app(dir.path());
    let (status, body) = call(&app, Method::GET, &format!("/jobs/{}", job.id), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"]["state"], "failed");
    assert!(body["status"]["reason"]
        .as_str()
        .unwrap()
        .contains("restart"));
}

#[tokio::test]
async fn lists_series_and_presets() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, series) = call(&app, Method::GET, "/rates/series", None).await;
    assert_eq!(status, StatusCode::OK);
    let ids: Vec<&str> = series
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["id"].as_str().unwrap())
        .collect();
    for id in [
        presets::INFLATION_SERIES,
        presets::SAVINGS_SERIES,
        presets::RETIREMENT_SERIES,
    ] {
        assert!(ids.contains(&id), "{id} missing from {ids:?}");
    }
    assert!(series[0]["months"].as_u64().unwrap() > 120);

    let (status, listed) = call(&app, Method::GET, "/presets", None).await;
    assert_eq!(status, StatusCode::OK);
    let names: Vec<&str> = listed
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["reference", "home_buyer", "saver", "debtor"]);
    let home = &listed[1]["plan"]["goals"];
    assert_eq!(home[2]["id"], "mortgage");
    assert_eq!(home[2]["weight_p"], 20.0);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn serves_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let app = app(dir.path());
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });

    let client = reqwest::Client::new();
    let created: Value = client
        .post(format!("http://{addr}/plans"))
        .json(&short_plan())
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    let id = created["id"].as_str().unwrap();
    let response = client
        .get(format!("http://{addr}/plans/{id}"))
        .send()
        .await
        .unwrap();
    assert_eq!(response.status().as_u16(), 200);
    assert!(
        response
            .headers()
            .contains_key("access-control-allow-origin")
            || {
                // CORS headers are only added for requests that carry an Origin
                let preflight = client
                    .get(format!("http://{addr}/presets"))
                    .header("origin", "http://localhost:5173")
                    .send()
                    .await
                    .unwrap();
                preflight
                    .headers()
                    .contains_key("access-control-allow-origin")
            }
    );
}
