//! Month-by-month contribution schedules in dollars, with CSV/JSON output
//! and the summary metrics used to compare policies.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::baselines::Baseline;
use crate::error::{Error, Result};
use crate::goals::{match_dollars, GoalKind, PlanConfig};
use crate::neural::PolicyParams;
use crate::simulate::{rollout, Rollout, Scenario};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub month: usize,
    pub income: f64,
    /// Dollars per goal, config order.
    pub contributions: Vec<f64>,
    pub unallocated: f64,
    pub employer_match: f64,
    /// Stock goals only, config order.
    pub fractions_outstanding: Vec<f64>,
    /// Per goal, config order.
    pub goal_utilities: Vec<f64>,
    pub utility: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub goal_ids: Vec<String>,
    pub stock_ids: Vec<String>,
    pub rows: Vec<ScheduleRow>,
    pub total_utility: f64,
    /// First month each stock goal is complete; `None` if never.
    pub completion_months: BTreeMap<String, Option<usize>>,
}

impl Schedule {
    pub fn from_rollout(plan: &PlanConfig, run: &Rollout) -> Self {
        let goal_ids: Vec<String> = plan.goals.iter().map(|g| g.id.clone()).collect();
        let stock_ids: Vec<String> = plan
            .stock_goals()
            .iter()
            .map(|&g| plan.goals[g].id.clone())
            .collect();
        let residual = plan.residual_slot();
        let rows: Vec<ScheduleRow> = run
            .steps
            .iter()
            .zip(&run.utilities)
            .map(|((state, alloc), u)| ScheduleRow {
                month: state.month,
                income: state.income,
                contributions: (0..goal_ids.len())
                    .map(|g| state.income * alloc.get(g))
                    .collect(),
                unallocated: state.income * alloc.get(residual),
                employer_match: match_dollars(plan, state.income, alloc),
                fractions_outstanding: state.fractions_outstanding.clone(),
                goal_utilities: u.per_goal.iter().map(|(_, v)| *v).collect(),
                utility: u.total,
            })
            .collect();
        let completion_months = stock_ids
            .iter()
            .enumerate()
            .map(|(k, id)| {
                let month = rows
                    .iter()
                    .find(|r| r.fractions_outstanding[k] <= 0.0)
                    .map(|r| r.month);
                (id.clone(), month)
            })
            .collect();
        Self {
            goal_ids,
            stock_ids,
            rows,
            total_utility: run.value,
            completion_months,
        }
    }

    pub fn completion_month(&self, goal_id: &str) -> Option<usize> {
        self.completion_months.get(goal_id).copied().flatten()
    }

    pub fn all_complete(&self) -> bool {
        self.completion_months.values().all(Option::is_some)
    }

    /// Dollars contributed towards retirement (own retirement savings, 401K,
    /// IRA and employer match) in months `0..months`.
    pub fn retirement_contributions(&self, plan: &PlanConfig, months: usize) -> f64 {
        let slots: Vec<usize> = plan
            .goals
            .iter()
            .enumerate()
            .filter(|(_, g)| {
                matches!(
                    g.kind,
                    GoalKind::Retirement | GoalKind::Contribution401K | GoalKind::ContributionIra
                )
            })
            .map(|(i, _)| i)
            .collect();
        self.rows
            .iter()
            .take(months)
            .map(|r| slots.iter().map(|&s| r.contributions[s]).sum::<f64>() + r.employer_match)
            .sum()
    }

    /// Mean over goals of the standard deviation of month-over-month
    /// changes in dollar contributions.
    pub fn contribution_volatility(&self) -> f64 {
        if self.rows.len() < 2 || self.goal_ids.is_empty() {
            return 0.0;
        }
        let per_goal = (0..self.goal_ids.len()).map(|g| {
            let diffs: Vec<f64> = self
                .rows
                .windows(2)
                .map(|w| w[1].contributions[g] - w[0].contributions[g])
                .collect();
            let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
            (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / diffs.len() as f64).sqrt()
        });
        per_goal.sum::<f64>() / self.goal_ids.len() as f64
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["month".to_string(), "income".to_string()];
        h.extend(self.goal_ids.iter().map(|id| format!("contrib_{id}")));
        h.push("unallocated".into());
        h.push("employer_match".into());
        h.extend(self.stock_ids.iter().map(|id| format!("x_{id}")));
        h.extend(self.goal_ids.iter().map(|id| format!("u_{id}")));
        h.push("utility".into());
        h
    }

    pub fn to_csv(&self) -> Result<String> {
        let err = |e: csv::Error| Error::Internal(format!("csv: {e}"));
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.csv_header()).map_err(err)?;
        for r in &self.rows {
            let mut rec = vec![r.month.to_string(), r.income.to_string()];
            rec.extend(r.contributions.iter().map(f64::to_string));
            rec.push(r.unallocated.to_string());
            rec.push(r.employer_match.to_string());
            rec.extend(r.fractions_outstanding.iter().map(f64::to_string));
            rec.extend(r.goal_utilities.iter().map(f64::to_string));
            rec.push(r.utility.to_string());
            w.write_record(&rec).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Schedule of `params` on one scenario.
pub fn learned_schedule(scenario: &Scenario<'_>, params: &PolicyParams) -> Result<Schedule> {
    Ok(Schedule::from_rollout(
        scenario.plan(),
        &rollout(scenario, params)?,
    ))
}

/// The learned policy beside the rule-based baselines on the same scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub learned: Schedule,
    pub waterfall: Schedule,
    pub even_split: Schedule,
}

impl Comparison {
    pub fn new(scenario: &Scenario<'_>, params: &PolicyParams) -> Result<Self> {
        let plan = scenario.plan();
        Ok(Self {
            learned: learned_schedule(scenario, params)?,
            waterfall: Schedule::from_rollout(plan, &Baseline::Waterfall.rollout(scenario)?),
            even_split: Schedule::from_rollout(plan, &Baseline::EvenSplit.rollout(scenario)?),
        })
    }

    pub fn entries(&self) -> [(&'static str, &Schedule); 3] {
        [
            ("learned", &self.learned),
            ("waterfall", &self.waterfall),
            ("even_split", &self.even_split),
        ]
    }
}
