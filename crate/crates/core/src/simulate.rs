//! Rollouts over a plan horizon.
//!
//! Two paths share one feature layout: [`rollout`] steps plain `f64` state
//! through [`advance`] for any [`Policy`], and [`record_objective`] records
//! the same dynamics and utilities on a [`Tape`] so the objective can be
//! differentiated with respect to the policy parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::goals::{advance, Allocation, GoalKind, PlanConfig, PlanState, RateMap};
use crate::neural::{ParamVars, PolicyParams, Tape, Var};
use crate::rates::RateTrajectory;
use crate::utility::{k401_terms, total_utility, UtilityBreakdown};

/// Monthly rates enter the network multiplied by this factor.
pub const RATE_FEATURE_SCALE: f64 = 100.0;

/// Network input layout: stock-goal fractions outstanding (config order),
/// then elapsed time `t / T`, then every plan rate (monthly, scaled).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub stock_ids: Vec<String>,
    pub rate_ids: Vec<String>,
}

impl FeatureLayout {
    pub fn for_plan(plan: &PlanConfig) -> Self {
        Self {
            stock_ids: plan
                .stock_goals()
                .iter()
                .map(|&g| plan.goals[g].id.clone())
                .collect(),
            rate_ids: plan.rate_ids(),
        }
    }

    pub fn dim(&self) -> usize {
        self.stock_ids.len() + 1 + self.rate_ids.len()
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.stock_ids.iter().map(|id| format!("x_{id}")).collect();
        names.push("time".into());
        names.extend(self.rate_ids.iter().map(|id| format!("rate_{id}")));
        names
    }
}

/// `t / T`, or 0 for a zero-length horizon.
pub fn time_feature(month: usize, horizon: usize) -> f64 {
    if horizon == 0 {
        0.0
    } else {
        month as f64 / horizon as f64
    }
}

/// Anything that maps a plan state to an allocation.
pub trait Policy {
    fn allocate(
        &self,
        plan: &PlanConfig,
        state: &PlanState,
        features: &[f64],
    ) -> Result<Allocation>;
}

impl Policy for PolicyParams {
    fn allocate(
        &self,
        _plan: &PlanConfig,
        _state: &PlanState,
        features: &[f64],
    ) -> Result<Allocation> {
        self.policy_forward(features)
    }
}

impl<F> Policy for F
where
    F: Fn(&PlanConfig, &PlanState, &[f64]) -> Result<Allocation>,
{
    fn allocate(
        &self,
        plan: &PlanConfig,
        state: &PlanState,
        features: &[f64],
    ) -> Result<Allocation> {
        self(plan, state, features)
    }
}

#[derive(Clone, Copy, Debug)]
enum Score {
    Single { p: f64 },
    TwoPhase { p: f64, q: f64, h: f64 },
    K401 { p: f64, q: f64, hi: f64, h: f64 },
    Ira { p: f64, cap: f64 },
}

#[derive(Clone, Copy, Debug)]
enum Motion {
    Debt,
    Savings,
    Retirement,
}

#[derive(Clone, Debug)]
struct StockTerm {
    slot: usize,
    motion: Motion,
    total: f64,
}

/// A validated plan paired with one rate trajectory, with incomes and
/// rate features resolved for every month.
#[derive(Clone, Debug)]
pub struct Scenario<'a> {
    plan: &'a PlanConfig,
    horizon: usize,
    stock: Vec<StockTerm>,
    /// Monthly rate per stock goal, per month.
    stock_rates: Vec<Vec<f64>>,
    scores: Vec<Score>,
    k401: Option<(usize, f64, f64)>,
    ira: Option<usize>,
    incomes: Vec<f64>,
    /// `[t / T, rates * scale]` per month.
    context: Vec<Vec<f64>>,
    rate_rows: Vec<RateMap>,
}

impl<'a> Scenario<'a> {
    pub fn new(plan: &'a PlanConfig, rates: &RateTrajectory) -> Result<Self> {
        plan.validate_goals()?;
        let horizon = plan.horizon_months;
        rates.check_covers(plan, horizon)?;
        let series = |id: &str| -> Result<&[f64]> {
            rates
                .get(id)
                .map(|v| &v[..=horizon])
                .ok_or_else(|| Error::Data(format!("trajectory has no rate `{id}`")))
        };

        let mut stock = Vec::new();
        let mut stock_rates = Vec::new();
        for g in plan.stock_goals() {
            let goal = &plan.goals[g];
            let motion = match goal.kind {
                GoalKind::Debt => Motion::Debt,
                GoalKind::Savings | GoalKind::EmergencyFund => Motion::Savings,
                GoalKind::Retirement => Motion::Retirement,
                _ => unreachable!("flow goal in stock list"),
            };
            stock.push(StockTerm {
                slot: g,
                motion,
                total: goal.total()?,
            });
            stock_rates.push(series(plan.goal_rate_id(g))?.to_vec());
        }

        let missing =
            |g: &crate::goals::GoalSpec, f: &str| Error::config(format!("{}.{f}", g.id), "missing");
        let scores = plan
            .goals
            .iter()
            .map(|g| {
                let p = g.weight_p;
                Ok(match g.kind {
                    GoalKind::Debt | GoalKind::Savings | GoalKind::Retirement => {
                        Score::Single { p }
                    }
                    GoalKind::EmergencyFund => Score::TwoPhase {
                        p,
                        q: g.weight_q.ok_or_else(|| missing(g, "weight_q"))?,
                        h: g.crossover_h.ok_or_else(|| missing(g, "crossover_h"))?,
                    },
                    GoalKind::Contribution401K => {
                        let (_, h) = k401_terms(g, 0.0)?;
                        Score::K401 {
                            p,
                            q: g.weight_q.ok_or_else(|| missing(g, "weight_q"))?,
                            hi: g
                                .max_contrib_frac
                                .ok_or_else(|| missing(g, "max_contrib_frac"))?,
                            h,
                        }
                    }
                    GoalKind::ContributionIra => Score::Ira {
                        p,
                        cap: g
                            .max_contrib_dollars
                            .ok_or_else(|| missing(g, "max_contrib_dollars"))?,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let k401 = plan.k401_index().map(|k| {
            let g = &plan.goals[k];
            (
                k,
                g.match_rate.unwrap_or(0.0),
                g.match_cap_frac.unwrap_or(0.0),
            )
        });

        let inflation = series(plan.inflation_rate_id())?;
        let mut incomes = Vec::with_capacity(horizon + 1);
        incomes.push(plan.initial_income);
        for t in 0..horizon {
            incomes.push(incomes[t] * (1.0 + inflation[t]));
        }

        let rate_ids = plan.rate_ids();
        let rate_cols = rate_ids
            .iter()
            .map(|id| series(id))
            .collect::<Result<Vec<_>>>()?;
        let context = (0..=horizon)
            .map(|t| {
                let mut row = Vec::with_capacity(1 + rate_cols.len());
                row.push(time_feature(t, horizon));
                row.extend(rate_cols.iter().map(|c| c[t] * RATE_FEATURE_SCALE));
                row
            })
            .collect();
        let rate_rows = (0..=horizon)
            .map(|t| {
                rate_ids
                    .iter()
                    .zip(&rate_cols)
                    .map(|(id, c)| (id.clone(), c[t]))
                    .collect()
            })
            .collect();

        Ok(Self {
            plan,
            horizon,
            stock,
            stock_rates,
            scores,
            k401,
            ira: plan.ira_index(),
            incomes,
            context,
            rate_rows,
        })
    }

    pub fn plan(&self) -> &PlanConfig {
        self.plan
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn layout(&self) -> FeatureLayout {
        FeatureLayout::for_plan(self.plan)
    }

    pub fn feature_dim(&self) -> usize {
        self.stock.len() + self.context[0].len()
    }

    /// Income for months `0..=T`.
    pub fn incomes(&self) -> &[f64] {
        &self.incomes
    }

    pub fn rates_at(&self, month: usize) -> &RateMap {
        &self.rate_rows[month]
    }

    pub fn features(&self, month: usize, fractions: &[f64]) -> Vec<f64> {
        let mut f = fractions.to_vec();
        f.extend_from_slice(&self.context[month]);
        f
    }
}

/// States and allocations for months `0..=T` with their utilities.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub steps: Vec<(PlanState, Allocation)>,
    pub value: f64,
    pub utilities: Vec<UtilityBreakdown>,
}

/// Runs `policy` through the reference dynamics. The allocation at month
/// `T` is scored but not applied.
pub fn rollout(scenario: &Scenario<'_>, policy: &impl Policy) -> Result<Rollout> {
    let plan = scenario.plan;
    let slots = plan.slot_count();
    let mut state = PlanState::initial(plan, scenario.rates_at(0).clone());
    let mut steps = Vec::with_capacity(scenario.horizon + 1);
    for t in 0..=scenario.horizon {
        let features = scenario.features(t, &state.fractions_outstanding);
        let alloc = policy.allocate(plan, &state, &features)?;
        if alloc.len() != slots {
            return Err(Error::config(
                "policy",
                format!("policy returned {} slots, plan needs {slots}", alloc.len()),
            ));
        }
        let next = if t < scenario.horizon {
            let mut next = advance(&state, &alloc, plan, scenario.rates_at(t))?;
            next.current_rates = scenario.rates_at(t + 1).clone();
            Some(next)
        } else {
            None
        };
        steps.push((state, alloc));
        match next {
            Some(n) => state = n,
            None => break,
        }
    }
    let (value, utilities) = total_utility(plan, &steps)?;
    Ok(Rollout {
        steps,
        value,
        utilities,
    })
}

/// Records the horizon objective for `params` on `tape` and returns the
/// scalar objective node.
pub fn record_objective(
    tape: &mut Tape,
    params: &PolicyParams,
    vars: &ParamVars,
    scenario: &Scenario<'_>,
) -> Result<Var> {
    let plan = scenario.plan;
    let slots = plan.slot_count();
    if params.output_dim() != slots {
        return Err(Error::config(
            "network",
            format!(
                "network has {} outputs, plan needs {slots}",
                params.output_dim()
            ),
        ));
    }
    if params.input_dim() != scenario.feature_dim() {
        return Err(Error::config(
            "network",
            format!(
                "network expects {} features, plan provides {}",
                params.input_dim(),
                scenario.feature_dim()
            ),
        ));
    }
    let goals = plan.goals.len();
    let mut xs: Vec<Var> = scenario.stock.iter().map(|_| tape.scalar(1.0)).collect();
    let mut terms = Vec::with_capacity((scenario.horizon + 1) * goals);

    for t in 0..=scenario.horizon {
        let income = scenario.incomes[t];
        let ctx = tape.leaf(scenario.context[t].clone());
        let mut parts = xs.clone();
        parts.push(ctx);
        let features = tape.concat(&parts);
        let probs = params.forward_on_tape(tape, vars, features)?;
        let pis: Vec<Var> = (0..goals).map(|g| tape.index(probs, g)).collect();

        let mut stock_pos = 0;
        for (g, score) in scenario.scores.iter().enumerate() {
            let u = match *score {
                Score::Single { p } => {
                    let r = tape.relu(xs[stock_pos]);
                    stock_pos += 1;
                    tape.scale(r, -p)
                }
                Score::TwoPhase { p, q, h } => {
                    let x = xs[stock_pos];
                    stock_pos += 1;
                    w2_on_tape(tape, x, p, q, h)
                }
                Score::K401 { p, q, hi, h } => {
                    let x = tape.scale(pis[g], -1.0 / hi);
                    let x = tape.shift(x, 1.0);
                    w2_on_tape(tape, x, p, q, h)
                }
                Score::Ira { p, cap } => {
                    let x = tape.scale(pis[g], -income / cap);
                    let x = tape.shift(x, 1.0);
                    let r = tape.relu(x);
                    tape.scale(r, -p)
                }
            };
            terms.push(u);
        }

        if t == scenario.horizon {
            break;
        }
        let mut next = Vec::with_capacity(xs.len());
        for (k, term) in scenario.stock.iter().enumerate() {
            let r = scenario.stock_rates[k][t];
            let scale = income / term.total;
            let interest = tape.scale(xs[k], r);
            let grown = tape.add(xs[k], interest);
            let x_next = match term.motion {
                Motion::Debt => {
                    let pay = tape.scale(pis[term.slot], scale);
                    let raw = tape.sub(grown, pay);
                    if plan.dynamics.debt_upper_clamp {
                        tape.clamp_unit(raw)
                    } else {
                        tape.relu(raw)
                    }
                }
                Motion::Savings => {
                    let base = tape.shift(grown, -r);
                    let pay = tape.scale(pis[term.slot], scale);
                    let raw = tape.sub(base, pay);
                    tape.clamp_unit(raw)
                }
                Motion::Retirement => {
                    let base = tape.shift(grown, -r);
                    let mut own = vec![pis[term.slot]];
                    if let Some((k401, rate, cap)) = scenario.k401 {
                        own.push(pis[k401]);
                        if rate != 0.0 {
                            let matched = tape.min_const(pis[k401], cap);
                            own.push(tape.scale(matched, rate));
                        }
                    }
                    if let Some(ira) = scenario.ira {
                        own.push(pis[ira]);
                    }
                    let paid = tape.accumulate(&own);
                    let paid = tape.scale(paid, scale);
                    let raw = tape.sub(base, paid);
                    tape.clamp_unit(raw)
                }
            };
            next.push(x_next);
        }
        xs = next;
    }
    Ok(tape.accumulate(&terms))
}

fn w2_on_tape(tape: &mut Tape, x: Var, p: f64, q: f64, h: f64) -> Var {
    let a = tape.relu(x);
    let a = tape.scale(a, -q);
    let b = tape.shift(x, -h);
    let b = tape.relu(b);
    let b = tape.scale(b, -(p - q));
    tape.add(a, b)
}

/// Objective value for `params` on one scenario, recorded on a fresh tape.
pub fn objective_value(params: &PolicyParams, scenario: &Scenario<'_>) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = params.record(&mut tape);
    let v = record_objective(&mut tape, params, &vars, scenario)?;
    Ok(tape.scalar_value(v))
}

/// Objective and its parameter gradient on one scenario.
pub fn objective_and_gradient(
    params: &PolicyParams,
    scenario: &Scenario<'_>,
) -> Result<(f64, PolicyParams)> {
    crate::neural::value_and_grad(params, |tape, vars| {
        record_objective(tape, params, vars, scenario)
    })
}
