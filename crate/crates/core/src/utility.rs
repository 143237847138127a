//! Piecewise-linear goal utilities and the horizon objective.
//!
//! Utilities take the fraction *remaining* as their argument. A completed
//! goal scores 0 and an untouched single-phase goal scores `-p`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::goals::{Allocation, GoalKind, PlanConfig, PlanState};

/// Single-phase utility `-p * max(0, x)`.
pub fn w1(x: f64, p: f64) -> f64 {
    -p * x.max(0.0)
}

/// Two-phase utility with slope `p` on `(h, 1)` and `q` on `(0, h)`.
pub fn w2(x: f64, p: f64, q: f64, h: f64) -> f64 {
    -q * x.max(0.0) - (p - q) * (x - h).max(0.0)
}

/// Two-phase parameters for a 401K goal: the fraction remaining argument
/// and crossover `(M+ - M-) / M+`.
pub(crate) fn k401_terms(goal: &crate::goals::GoalSpec, pi: f64) -> Result<(f64, f64)> {
    let hi = goal
        .max_contrib_frac
        .ok_or_else(|| Error::config(format!("{}.max_contrib_frac", goal.id), "missing"))?;
    let lo = goal
        .min_contrib_frac
        .ok_or_else(|| Error::config(format!("{}.min_contrib_frac", goal.id), "missing"))?;
    Ok((1.0 - pi / hi, (hi - lo) / hi))
}

fn require(goal: &crate::goals::GoalSpec, name: &str, v: Option<f64>) -> Result<f64> {
    v.ok_or_else(|| {
        Error::config(
            format!("{}.{name}", goal.id),
            format!("required for {} goals", goal.kind.as_str()),
        )
    })
}

/// Utility of `config.goals[index]` at one month.
pub fn goal_utility(
    config: &PlanConfig,
    index: usize,
    state: &PlanState,
    allocation: &Allocation,
) -> Result<f64> {
    let goal = &config.goals[index];
    let stock_pos = || {
        config
            .stock_goals()
            .iter()
            .position(|&g| g == index)
            .ok_or_else(|| Error::Internal(format!("goal {} is not a stock goal", goal.id)))
    };
    Ok(match goal.kind {
        GoalKind::Debt | GoalKind::Savings | GoalKind::Retirement => {
            w1(state.fractions_outstanding[stock_pos()?], goal.weight_p)
        }
        GoalKind::EmergencyFund => {
            let q = require(goal, "weight_q", goal.weight_q)?;
            let h = require(goal, "crossover_h", goal.crossover_h)?;
            w2(
                state.fractions_outstanding[stock_pos()?],
                goal.weight_p,
                q,
                h,
            )
        }
        GoalKind::Contribution401K => {
            let q = require(goal, "weight_q", goal.weight_q)?;
            let (x, h) = k401_terms(goal, allocation.get(index))?;
            w2(x, goal.weight_p, q, h)
        }
        GoalKind::ContributionIra => {
            let cap = require(goal, "max_contrib_dollars", goal.max_contrib_dollars)?;
            w1(
                1.0 - state.income * allocation.get(index) / cap,
                goal.weight_p,
            )
        }
    })
}

/// Per-goal utilities for one month.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityBreakdown {
    pub month: usize,
    /// `(goal id, utility)` in config order.
    pub per_goal: Vec<(String, f64)>,
    pub total: f64,
}

/// One row of the flattened utility report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityRow {
    pub month: usize,
    pub goal: String,
    pub utility: f64,
}

impl UtilityBreakdown {
    pub fn at(config: &PlanConfig, state: &PlanState, allocation: &Allocation) -> Result<Self> {
        let per_goal = (0..config.goals.len())
            .map(|i| {
                Ok((
                    config.goals[i].id.clone(),
                    goal_utility(config, i, state, allocation)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let total = per_goal.iter().map(|(_, u)| u).sum();
        Ok(Self {
            month: state.month,
            per_goal,
            total,
        })
    }

    pub fn rows(&self) -> impl Iterator<Item = UtilityRow> + '_ {
        self.per_goal.iter().map(move |(goal, utility)| UtilityRow {
            month: self.month,
            goal: goal.clone(),
            utility: *utility,
        })
    }
}

/// Sum of every goal's utility over every month of `trajectory`.
pub fn total_utility(
    config: &PlanConfig,
    trajectory: &[(PlanState, Allocation)],
) -> Result<(f64, Vec<UtilityBreakdown>)> {
    let months = trajectory
        .iter()
        .map(|(s, a)| UtilityBreakdown::at(config, s, a))
        .collect::<Result<Vec<_>>>()?;
    let total = months.iter().map(|m| m.total).sum();
    Ok((total, months))
}
