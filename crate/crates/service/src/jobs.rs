use serde::{Deserialize, Serialize};
use uuid::Uuid;

use paycheck_core::rates::{all_windows, window_at, RateSeries, YearMonth};
use paycheck_core::schedule::Comparison;
use paycheck_core::simulate::Scenario;
use paycheck_core::trainer::{self, Mode, TrainConfig, Trained};
use paycheck_core::{goals::PlanConfig, rates::constant_trajectory, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running { iteration: usize },
    Done,
    Failed { reason: String },
}

impl JobStatus {
    fn rank(&self) -> u8 {
        match self {
            JobStatus::Queued => 0,
            JobStatus::Running { .. } => 1,
            JobStatus::Done | JobStatus::Failed { .. } => 2,
        }
    }

    pub fn is_active(&self) -> bool {
        self.rank() < 2
    }

    /// Statuses only move forward; a running job's iteration never decreases.
    pub fn can_become(&self, next: &JobStatus) -> bool {
        match (self, next) {
            (JobStatus::Running { iteration: a }, JobStatus::Running { iteration: b }) => b >= a,
            _ => next.rank() > self.rank(),
        }
    }
}

/// Body of `POST /plans/{id}/jobs`; every field is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JobRequest {
    pub train: TrainConfig,
    /// First month of the historical evaluation window (stochastic mode).
    pub eval_start: Option<YearMonth>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: Uuid,
    pub plan_id: Uuid,
    pub request: JobRequest,
    pub status: JobStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_value: Option<f64>,
}

pub const DEFAULT_EVAL_START: (i32, u32) = (2012, 1);

pub struct JobOutput {
    pub trained: Trained,
    pub comparison: Comparison,
}

/// Trains and evaluates one job. Blocking; run off the async runtime.
pub fn execute(
    plan: &PlanConfig,
    request: &JobRequest,
    series: &[RateSeries],
    observer: &mut dyn FnMut(usize, f64) -> bool,
) -> Result<JobOutput> {
    let horizon = plan.horizon_months;
    let (trained, eval) = match request.train.mode {
        Mode::ConstantRates => (
            trainer::train_constant_observed(plan, &request.train, observer)?,
            constant_trajectory(plan, horizon)?,
        ),
        Mode::StochasticRates => {
            let dataset = all_windows(series, horizon)?;
            let trained =
                trainer::train_stochastic_observed(plan, &dataset, &request.train, observer)?;
            let start = match request.eval_start {
                Some(s) => s,
                None => YearMonth::new(DEFAULT_EVAL_START.0, DEFAULT_EVAL_START.1)?,
            };
            (
                trained,
                window_at(series, start, horizon)?.with_plan_constants(plan)?,
            )
        }
    };
    let scenario = Scenario::new(plan, &eval)?;
    let comparison = Comparison::new(&scenario, &trained.params)?;
    Ok(JobOutput {
        trained,
        comparison,
    })
}
