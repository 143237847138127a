//! Goal specifications, plan configuration and the monthly goal dynamics.
//!
//! Every stock goal (debt, savings, emergency fund, retirement) carries a
//! *fraction outstanding* in `[0, 1]`: `1` means untouched and `0` means the
//! goal is complete. Flow goals (401K, IRA) have no state and are scored on
//! each month's contribution alone.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the allocation simplex constraint.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Rate id used for a constant inflation source.
pub const INFLATION_RATE_ID: &str = "inflation";

/// Monthly rates keyed by rate id.
pub type RateMap = BTreeMap<String, f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalKind {
    Debt,
    Savings,
    EmergencyFund,
    Retirement,
    #[serde(rename = "contribution_401k")]
    Contribution401K,
    #[serde(rename = "contribution_ira")]
    ContributionIra,
}

impl GoalKind {
    /// Stock goals carry a fraction-outstanding state.
    pub fn is_stock(self) -> bool {
        matches!(
            self,
            GoalKind::Debt | GoalKind::Savings | GoalKind::EmergencyFund | GoalKind::Retirement
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GoalKind::Debt => "debt",
            GoalKind::Savings => "savings",
            GoalKind::EmergencyFund => "emergency_fund",
            GoalKind::Retirement => "retirement",
            GoalKind::Contribution401K => "contribution_401k",
            GoalKind::ContributionIra => "contribution_ira",
        }
    }
}

/// Where a goal's (or inflation's) rate comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateSource {
    /// Annual rate, converted to a monthly rate before use.
    Constant(f64),
    /// Historical series, looked up by series id.
    Series(String),
    /// Rate applied as-is at every step, with no annual-to-monthly conversion.
    PerStep(f64),
}

impl RateSource {
    fn zero() -> Self {
        RateSource::Constant(0.0)
    }

    pub fn is_series(&self) -> bool {
        matches!(self, RateSource::Series(_))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub id: String,
    pub kind: GoalKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_amount: Option<f64>,
    #[serde(default = "RateSource::zero")]
    pub rate_source: RateSource,
    pub weight_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crossover_h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_contrib_frac: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_contrib_frac: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_contrib_dollars: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_cap_frac: Option<f64>,
}

impl GoalSpec {
    fn bare(id: &str, kind: GoalKind, rate_source: RateSource, weight_p: f64) -> Self {
        Self {
            id: id.to_string(),
            kind,
            total_amount: None,
            rate_source,
            weight_p,
            weight_q: None,
            crossover_h: None,
            min_contrib_frac: None,
            max_contrib_frac: None,
            max_contrib_dollars: None,
            match_rate: None,
            match_cap_frac: None,
        }
    }

    pub fn debt(id: &str, amount: f64, rate: RateSource, p: f64) -> Self {
        Self {
            total_amount: Some(amount),
            ..Self::bare(id, GoalKind::Debt, rate, p)
        }
    }

    pub fn savings(id: &str, amount: f64, rate: RateSource, p: f64) -> Self {
        Self {
            total_amount: Some(amount),
            ..Self::bare(id, GoalKind::Savings, rate, p)
        }
    }

    pub fn emergency_fund(id: &str, amount: f64, p: f64, q: f64, h: f64) -> Self {
        Self {
            total_amount: Some(amount),
            weight_q: Some(q),
            crossover_h: Some(h),
            ..Self::bare(id, GoalKind::EmergencyFund, RateSource::Constant(0.0), p)
        }
    }

    pub fn retirement(id: &str, amount: f64, rate: RateSource, p: f64) -> Self {
        Self {
            total_amount: Some(amount),
            ..Self::bare(id, GoalKind::Retirement, rate, p)
        }
    }

    pub fn contribution_401k(id: &str, min_frac: f64, max_frac: f64, p: f64, q: f64) -> Self {
        Self {
            weight_q: Some(q),
            min_contrib_frac: Some(min_frac),
            max_contrib_frac: Some(max_frac),
            ..Self::bare(id, GoalKind::Contribution401K, RateSource::Constant(0.0), p)
        }
    }

    pub fn contribution_ira(id: &str, max_dollars: f64, p: f64) -> Self {
        Self {
            max_contrib_dollars: Some(max_dollars),
            ..Self::bare(id, GoalKind::ContributionIra, RateSource::Constant(0.0), p)
        }
    }

    pub fn with_match(mut self, match_rate: f64, match_cap_frac: f64) -> Self {
        self.match_rate = Some(match_rate);
        self.match_cap_frac = Some(match_cap_frac);
        self
    }

    /// `G^i`; errors for flow goals, which have no cumulative total.
    pub fn total(&self) -> Result<f64> {
        self.total_amount
            .ok_or_else(|| Error::config(&self.id, "goal has no total_amount"))
    }

    fn validate(&self, path: &str) -> Result<()> {
        let field = |name: &str| format!("{path}.{name}");
        let nonneg = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(
                    field(name),
                    format!("must be a finite value >= 0, got {v}"),
                ))
            }
        };
        let need = |name: &str, v: Option<f64>| -> Result<f64> {
            v.ok_or_else(|| {
                Error::config(
                    field(name),
                    format!("required for {} goals", self.kind.as_str()),
                )
            })
        };

        if self.id.is_empty() {
            return Err(Error::config(field("id"), "must not be empty"));
        }
        nonneg("weight_p", self.weight_p)?;
        if let Some(q) = self.weight_q {
            nonneg("weight_q", q)?;
        }
        if let Some(h) = self.crossover_h {
            if !(0.0..=1.0).contains(&h) {
                return Err(Error::config(
                    field("crossover_h"),
                    format!("must lie in [0, 1], got {h}"),
                ));
            }
        }
        match &self.rate_source {
            RateSource::Constant(r) | RateSource::PerStep(r) if !(r.is_finite() && *r > -1.0) => {
                return Err(Error::config(
                    field("rate_source"),
                    format!("rate must be > -1, got {r}"),
                ));
            }
            RateSource::Series(s) if s.is_empty() => {
                return Err(Error::config(
                    field("rate_source"),
                    "series id must not be empty",
                ));
            }
            _ => {}
        }

        if self.kind.is_stock() {
            let total = need("total_amount", self.total_amount)?;
            if !(total.is_finite() && total > 0.0) {
                return Err(Error::config(
                    field("total_amount"),
                    format!("must be > 0, got {total}"),
                ));
            }
        }
        match self.kind {
            GoalKind::EmergencyFund => {
                need("weight_q", self.weight_q)?;
                need("crossover_h", self.crossover_h)?;
                if self.rate_source != RateSource::Constant(0.0) {
                    return Err(Error::config(
                        field("rate_source"),
                        "emergency funds earn no interest; use {\"constant\": 0.0}",
                    ));
                }
            }
            GoalKind::Contribution401K => {
                need("weight_q", self.weight_q)?;
                let lo = need("min_contrib_frac", self.min_contrib_frac)?;
                let hi = need("max_contrib_frac", self.max_contrib_frac)?;
                if !(0.0 < lo && lo < hi && hi < 1.0) {
                    return Err(Error::config(
                        field("max_contrib_frac"),
                        format!(
                            "need 0 < min_contrib_frac < max_contrib_frac < 1, got {lo} and {hi}"
                        ),
                    ));
                }
                if let Some(m) = self.match_rate {
                    nonneg("match_rate", m)?;
                }
                if let Some(c) = self.match_cap_frac {
                    nonneg("match_cap_frac", c)?;
                }
            }
            GoalKind::ContributionIra => {
                let max = need("max_contrib_dollars", self.max_contrib_dollars)?;
                if !(max.is_finite() && max > 0.0) {
                    return Err(Error::config(
                        field("max_contrib_dollars"),
                        format!("must be > 0, got {max}"),
                    ));
                }
            }
            GoalKind::Debt | GoalKind::Savings | GoalKind::Retirement => {}
        }
        Ok(())
    }
}

/// How annual debt APRs become monthly rates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateConvention {
    /// `(1 + r)^(1/12) - 1`
    #[default]
    Geometric,
    /// `r / 12`
    Nominal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsOptions {
    /// Conversion applied to `Constant` rates on debt goals. Every other
    /// rate is converted geometrically.
    #[serde(default)]
    pub debt_rate_convention: RateConvention,
    /// When false, unpaid debt may grow beyond its initial amount (fraction
    /// above 1). Only the lower clamp at 0 is applied.
    #[serde(default = "default_true")]
    pub debt_upper_clamp: bool,
}

fn default_true() -> bool {
    true
}

impl Default for DynamicsOptions {
    fn default() -> Self {
        Self {
            debt_rate_convention: RateConvention::Geometric,
            debt_upper_clamp: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    pub initial_income: f64,
    pub horizon_months: usize,
    pub inflation_source: RateSource,
    pub goals: Vec<GoalSpec>,
    #[serde(default)]
    pub dynamics: DynamicsOptions,
}

impl PlanConfig {
    /// Parses and validates a plan. Errors carry the JSON path of the
    /// offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let plan: PlanConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(
                if path.is_empty() { "$".into() } else { path },
                e.into_inner().to_string(),
            )
        })?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon_months < 1 {
            return Err(Error::config("horizon_months", "must be >= 1"));
        }
        self.validate_goals()
    }

    /// Every check in [`validate`](Self::validate) except the horizon
    /// length; simulation accepts the degenerate `T = 0` plan.
    pub fn validate_goals(&self) -> Result<()> {
        if !(self.initial_income.is_finite() && self.initial_income > 0.0) {
            return Err(Error::config(
                "initial_income",
                format!("must be > 0, got {}", self.initial_income),
            ));
        }
        match &self.inflation_source {
            RateSource::Constant(r) | RateSource::PerStep(r) if !(r.is_finite() && *r > -1.0) => {
                return Err(Error::config(
                    "inflation_source",
                    format!("rate must be > -1, got {r}"),
                ));
            }
            _ => {}
        }
        if self.goals.is_empty() {
            return Err(Error::config("goals", "at least one goal is required"));
        }
        for (i, goal) in self.goals.iter().enumerate() {
            let path = format!("goals[{i}]");
            goal.validate(&path)?;
            if goal.id == INFLATION_RATE_ID {
                return Err(Error::config(
                    format!("{path}.id"),
                    "`inflation` is reserved",
                ));
            }
            if self.goals[..i].iter().any(|g| g.id == goal.id) {
                return Err(Error::config(
                    format!("{path}.id"),
                    format!("duplicate goal id `{}`", goal.id),
                ));
            }
        }
        for (kind, label) in [
            (GoalKind::Retirement, "retirement"),
            (GoalKind::Contribution401K, "401K"),
            (GoalKind::ContributionIra, "IRA"),
            (GoalKind::EmergencyFund, "emergency fund"),
        ] {
            let idx: Vec<usize> = self.indices_of(kind).collect();
            if idx.len() > 1 {
                return Err(Error::config(
                    format!("goals[{}].kind", idx[1]),
                    format!("at most one {label} goal is allowed"),
                ));
            }
        }
        if self.retirement_index().is_none() {
            if let Some(i) = self.goals.iter().position(|g| {
                matches!(
                    g.kind,
                    GoalKind::Contribution401K | GoalKind::ContributionIra
                )
            }) {
                return Err(Error::config(
                    format!("goals[{i}].kind"),
                    "401K and IRA contributions require a retirement goal",
                ));
            }
        }
        Ok(())
    }

    fn indices_of(&self, kind: GoalKind) -> impl Iterator<Item = usize> + '_ {
        self.goals
            .iter()
            .enumerate()
            .filter(move |(_, g)| g.kind == kind)
            .map(|(i, _)| i)
    }

    /// Number of allocation slots: one per goal plus the residual.
    pub fn slot_count(&self) -> usize {
        self.goals.len() + 1
    }

    pub fn residual_slot(&self) -> usize {
        self.goals.len()
    }

    /// Goal indices of stock goals, in config order. `PlanState` fractions
    /// follow this order.
    pub fn stock_goals(&self) -> Vec<usize> {
        self.goals
            .iter()
            .enumerate()
            .filter(|(_, g)| g.kind.is_stock())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn retirement_index(&self) -> Option<usize> {
        self.indices_of(GoalKind::Retirement).next()
    }

    pub fn k401_index(&self) -> Option<usize> {
        self.indices_of(GoalKind::Contribution401K).next()
    }

    pub fn ira_index(&self) -> Option<usize> {
        self.indices_of(GoalKind::ContributionIra).next()
    }

    pub fn goal_index(&self, id: &str) -> Option<usize> {
        self.goals.iter().position(|g| g.id == id)
    }

    /// Rate id that feeds `goals[index]`.
    pub fn goal_rate_id(&self, index: usize) -> &str {
        let goal = &self.goals[index];
        match &goal.rate_source {
            RateSource::Series(s) => s,
            _ => &goal.id,
        }
    }

    pub fn inflation_rate_id(&self) -> &str {
        match &self.inflation_source {
            RateSource::Series(s) => s,
            _ => INFLATION_RATE_ID,
        }
    }

    /// Every rate id the plan references: inflation first, then stock goals
    /// in config order, without duplicates. Flow goals have no rate.
    pub fn rate_ids(&self) -> Vec<String> {
        let mut ids = vec![self.inflation_rate_id().to_string()];
        for i in self.stock_goals() {
            let id = self.goal_rate_id(i);
            if !ids.iter().any(|x| x == id) {
                ids.push(id.to_string());
            }
        }
        ids
    }

    /// Source behind a rate id.
    pub fn rate_source_for(&self, rate_id: &str) -> Option<&RateSource> {
        if self.inflation_rate_id() == rate_id {
            return Some(&self.inflation_source);
        }
        self.stock_goals()
            .into_iter()
            .find(|&i| self.goal_rate_id(i) == rate_id)
            .map(|i| &self.goals[i].rate_source)
    }

    /// True when every rate source is a constant (or per-step constant).
    pub fn all_rates_constant(&self) -> bool {
        !self.inflation_source.is_series()
            && self
                .stock_goals()
                .into_iter()
                .all(|i| !self.goals[i].rate_source.is_series())
    }

    /// Monthly rate for a non-series source on the given rate id.
    pub fn constant_monthly_rate(&self, rate_id: &str) -> Result<f64> {
        let source = self
            .rate_source_for(rate_id)
            .ok_or_else(|| Error::config("rate_source", format!("unknown rate id `{rate_id}`")))?;
        let is_debt = self
            .goals
            .iter()
            .any(|g| g.kind == GoalKind::Debt && g.id == rate_id);
        match source {
            RateSource::Constant(annual) => {
                if is_debt && self.dynamics.debt_rate_convention == RateConvention::Nominal {
                    Ok(annual / 12.0)
                } else {
                    monthly_rate(*annual)
                }
            }
            RateSource::PerStep(r) => Ok(*r),
            RateSource::Series(s) => Err(Error::config(
                "rate_source",
                format!("rate id `{rate_id}` comes from series `{s}`, not a constant"),
            )),
        }
    }
}

/// State of a plan at the start of month `month`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanState {
    pub month: usize,
    /// Aligned with [`PlanConfig::stock_goals`].
    pub fractions_outstanding: Vec<f64>,
    pub income: f64,
    /// Monthly rates in effect during this month.
    pub current_rates: RateMap,
}

impl PlanState {
    pub fn initial(config: &PlanConfig, rates: RateMap) -> Self {
        Self {
            month: 0,
            fractions_outstanding: vec![1.0; config.stock_goals().len()],
            income: config.initial_income,
            current_rates: rates,
        }
    }
}

/// Fractions of the month's income per slot; the last slot is unallocated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    fractions: Vec<f64>,
}

impl Allocation {
    pub fn new(fractions: Vec<f64>) -> Result<Self> {
        if fractions.is_empty() {
            return Err(Error::Validation(
                "allocation needs at least the residual slot".into(),
            ));
        }
        if let Some((i, v)) = fractions
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::Validation(format!(
                "allocation slot {i} is {v}; entries must be >= 0"
            )));
        }
        let sum: f64 = fractions.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::Validation(format!(
                "allocation sums to {sum}, expected 1"
            )));
        }
        Ok(Self { fractions })
    }

    /// Everything to the residual slot.
    pub fn residual_only(slots: usize) -> Self {
        let mut fractions = vec![0.0; slots];
        fractions[slots - 1] = 1.0;
        Self { fractions }
    }

    /// All income to one slot.
    pub fn all_to(slots: usize, slot: usize) -> Self {
        let mut fractions = vec![0.0; slots];
        fractions[slot] = 1.0;
        Self { fractions }
    }

    pub fn uniform(slots: usize) -> Self {
        Self {
            fractions: vec![1.0 / slots as f64; slots],
        }
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn get(&self, slot: usize) -> f64 {
        self.fractions[slot]
    }

    pub fn len(&self) -> usize {
        self.fractions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fractions.is_empty()
    }
}

/// Result of one goal transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    /// Clamped to `[0, 1]`.
    pub value: f64,
    /// Before clamping.
    pub raw: f64,
}

impl Step {
    fn clamped(raw: f64) -> Self {
        Self {
            value: raw.clamp(0.0, 1.0),
            raw,
        }
    }
}

/// Geometric annual-to-monthly conversion, `(1 + r)^(1/12) - 1`.
pub fn monthly_rate(annual_rate: f64) -> Result<f64> {
    if !(annual_rate > -1.0) || !annual_rate.is_finite() {
        return Err(Error::Domain(format!(
            "annual rate must be > -1, got {annual_rate}"
        )));
    }
    Ok((1.0 + annual_rate).powf(1.0 / 12.0) - 1.0)
}

/// Debt accrues interest on the outstanding fraction before the payment
/// is subtracted: `(1 + r) x - payment / total`.
pub fn step_debt(x: f64, r_m: f64, payment: f64, total: f64) -> Step {
    debug_assert!(total > 0.0 && payment >= 0.0);
    // `x + r x` keeps the low bits of small rates that `1 + r` would drop
    Step::clamped(x + r_m * x - payment / total)
}

/// Interest grows the completed share `1 - x`:
/// `1 - (1 + r)(1 - x) - contribution / total`.
pub fn step_savings(x: f64, r_m: f64, contribution: f64, total: f64) -> Step {
    debug_assert!(total > 0.0 && contribution >= 0.0);
    Step::clamped(grown_outstanding(x, r_m) - contribution / total)
}

/// `1 - (1 + r)(1 - x)`, rearranged to avoid cancelling against 1.
fn grown_outstanding(x: f64, r_m: f64) -> f64 {
    x - r_m * (1.0 - x)
}

pub fn employer_match(pi_401k: f64, income: f64, match_rate: f64, match_cap_frac: f64) -> f64 {
    match_rate * pi_401k.min(match_cap_frac) * income
}

#[allow(clippy::too_many_arguments)]
pub fn step_retirement(
    x: f64,
    r_m: f64,
    income: f64,
    pi_401k: f64,
    pi_ira: f64,
    pi_rs: f64,
    match_dollars: f64,
    total: f64,
) -> Step {
    debug_assert!(total > 0.0);
    let paid = match_dollars + income * (pi_401k + pi_ira + pi_rs);
    Step::clamped(grown_outstanding(x, r_m) - paid / total)
}

fn rate(rates: &RateMap, id: &str) -> Result<f64> {
    rates
        .get(id)
        .copied()
        .ok_or_else(|| Error::Data(format!("no rate for `{id}` in this month")))
}

/// Employer match dollars for this month under `allocation`.
pub fn match_dollars(config: &PlanConfig, income: f64, allocation: &Allocation) -> f64 {
    match config.k401_index() {
        Some(k) => {
            let g = &config.goals[k];
            employer_match(
                allocation.get(k),
                income,
                g.match_rate.unwrap_or(0.0),
                g.match_cap_frac.unwrap_or(0.0),
            )
        }
        None => 0.0,
    }
}

/// One month of plan dynamics. The returned state carries `rates_at_t` as
/// its `current_rates`; callers stepping through a trajectory replace them
/// with the next month's rates.
pub fn advance(
    state: &PlanState,
    allocation: &Allocation,
    config: &PlanConfig,
    rates_at_t: &RateMap,
) -> Result<PlanState> {
    if state.month >= config.horizon_months {
        return Err(Error::Sequencing(format!(
            "cannot advance past month {} of a {}-month plan",
            state.month, config.horizon_months
        )));
    }
    if allocation.len() != config.slot_count() {
        return Err(Error::Shape(format!(
            "allocation has {} slots, plan needs {}",
            allocation.len(),
            config.slot_count()
        )));
    }
    let income = state.income;
    let stock = config.stock_goals();
    let mut next = Vec::with_capacity(stock.len());
    for (k, &gi) in stock.iter().enumerate() {
        let goal = &config.goals[gi];
        let x = state.fractions_outstanding[k];
        let r_m = rate(rates_at_t, config.goal_rate_id(gi))?;
        let total = goal.total()?;
        let paid = income * allocation.get(gi);
        let x_next = match goal.kind {
            GoalKind::Debt => {
                let s = step_debt(x, r_m, paid, total);
                if config.dynamics.debt_upper_clamp {
                    s.value
                } else {
                    s.raw.max(0.0)
                }
            }
            GoalKind::Savings | GoalKind::EmergencyFund => step_savings(x, r_m, paid, total).value,
            GoalKind::Retirement => {
                let pi_401k = config.k401_index().map_or(0.0, |s| allocation.get(s));
                let pi_ira = config.ira_index().map_or(0.0, |s| allocation.get(s));
                let m = match_dollars(config, income, allocation);
                step_retirement(
                    x,
                    r_m,
                    income,
                    pi_401k,
                    pi_ira,
                    allocation.get(gi),
                    m,
                    total,
                )
                .value
            }
            GoalKind::Contribution401K | GoalKind::ContributionIra => {
                unreachable!("flow goal in stock list")
            }
        };
        next.push(x_next);
    }
    let inflation = rate(rates_at_t, config.inflation_rate_id())?;
    Ok(PlanState {
        month: state.month + 1,
        fractions_outstanding: next,
        income: income * (1.0 + inflation),
        current_rates: rates_at_t.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn monthly_rate_examples() {
        assert_eq!(monthly_rate(0.0).unwrap(), 0.0);
        // (1.2)^(1/12) - 1 and (1.02)^(1/12) - 1, evaluated with mpmath at 50 digits.
        assert!(close(
            monthly_rate(0.20).unwrap(),
            0.015309470499731217,
            1e-15
        ));
        assert!(close(
            monthly_rate(0.02).unwrap(),
            0.0016515813019201748,
            1e-15
        ));
        assert!(matches!(monthly_rate(-1.0), Err(Error::Domain(_))));
        assert!(matches!(monthly_rate(-3.0), Err(Error::Domain(_))));
    }

    #[test]
    fn step_debt_examples() {
        assert_eq!(step_debt(1.0, 0.0, 0.0, 825.0).value, 1.0);
        let s = step_debt(1.0, 0.015309, 825.0, 825.0);
        assert!(close(s.value, 0.015309, 1e-12));
        assert_eq!(s.value, s.raw);
        let s = step_debt(0.001, 0.01, 500.0, 825.0);
        assert_eq!(s.value, 0.0);
        assert!(s.raw < 0.0);
    }

    #[test]
    fn step_savings_examples() {
        assert_eq!(step_savings(1.0, 0.05, 0.0, 157_000.0).value, 1.0);
        assert_eq!(step_savings(0.5, 0.0, 78_500.0, 157_000.0).value, 0.0);
        let expect: f64 = 1.0 - 1.008 * 0.5 - 1000.0 / 157_000.0;
        assert!(close(
            step_savings(0.5, 0.008, 1000.0, 157_000.0).value,
            expect.clamp(0.0, 1.0),
            1e-15
        ));
    }

    #[test]
    fn employer_match_examples() {
        assert_eq!(employer_match(0.0, 7500.0, 1.0, 0.06), 0.0);
        assert!(close(employer_match(0.10, 7500.0, 1.0, 0.06), 450.0, 1e-12));
        assert!(close(employer_match(0.04, 7500.0, 0.5, 0.06), 150.0, 1e-12));
    }

    #[test]
    fn step_retirement_examples() {
        let s = step_retirement(1.0, 0.1 / 12.0, 7500.0, 0.0, 0.0, 0.0, 0.0, 1e6);
        assert_eq!(s.value, 1.0);
        let s = step_retirement(1.0, 0.0, 7500.0, 0.06, 0.0667, 0.1, 450.0, 1e6);
        let expect = 1.0 - (450.0 + 7500.0 * 0.2267) / 1e6;
        assert!(close(s.value, expect, 1e-12));
        assert_eq!(
            step_retirement(0.0, 0.008, 7500.0, 0.1, 0.1, 0.1, 450.0, 1e6).value,
            0.0
        );
    }

    fn two_goal_plan() -> PlanConfig {
        PlanConfig {
            initial_income: 1000.0,
            horizon_months: 3,
            inflation_source: RateSource::Constant(0.0),
            goals: vec![
                GoalSpec::debt("card", 1000.0, RateSource::Constant(0.0), 1.0),
                GoalSpec::savings("house", 5000.0, RateSource::Constant(0.0), 1.0),
            ],
            dynamics: DynamicsOptions::default(),
        }
    }

    fn zero_rates(plan: &PlanConfig) -> RateMap {
        plan.rate_ids().into_iter().map(|id| (id, 0.0)).collect()
    }

    #[test]
    fn advance_all_residual_is_identity() {
        let plan = two_goal_plan();
        let rates = zero_rates(&plan);
        let s0 = PlanState::initial(&plan, rates.clone());
        let s1 = advance(&s0, &Allocation::residual_only(3), &plan, &rates).unwrap();
        assert_eq!(s1.month, 1);
        assert_eq!(s1.fractions_outstanding, s0.fractions_outstanding);
        assert_eq!(s1.income, s0.income);
    }

    #[test]
    fn advance_rejects_out_of_range_month() {
        let plan = two_goal_plan();
        let rates = zero_rates(&plan);
        let mut s = PlanState::initial(&plan, rates.clone());
        s.month = 3;
        let err = advance(&s, &Allocation::uniform(3), &plan, &rates).unwrap_err();
        assert!(matches!(err, Error::Sequencing(_)));
    }

    #[test]
    fn advance_missing_rate_is_data_error() {
        let plan = two_goal_plan();
        let s = PlanState::initial(&plan, RateMap::new());
        let err = advance(&s, &Allocation::uniform(3), &plan, &RateMap::new()).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn zero_income_rejected() {
        let mut plan = two_goal_plan();
        plan.initial_income = 0.0;
        match plan.validate() {
            Err(Error::Config { path, .. }) => assert_eq!(path, "initial_income"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn allocation_rejects_off_simplex() {
        assert!(Allocation::new(vec![0.5, 0.6]).is_err());
        assert!(Allocation::new(vec![-0.1, 1.1]).is_err());
        assert!(Allocation::new(vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn validation_paths() {
        let mut plan = two_goal_plan();
        plan.goals
            .push(GoalSpec::contribution_ira("ira", 500.0, 1.0));
        match plan.validate() {
            Err(Error::Config { path, .. }) => assert_eq!(path, "goals[2].kind"),
            other => panic!("unexpected {other:?}"),
        }
        let mut plan = two_goal_plan();
        plan.goals[1].total_amount = None;
        match plan.validate() {
            Err(Error::Config { path, .. }) => assert_eq!(path, "goals[1].total_amount"),
            other => panic!("unexpected {other:?}"),
        }
        let mut plan = two_goal_plan();
        plan.goals.push(GoalSpec::retirement(
            "r1",
            1e6,
            RateSource::Constant(0.1),
            1.0,
        ));
        plan.goals.push(GoalSpec::retirement(
            "r2",
            1e6,
            RateSource::Constant(0.1),
            1.0,
        ));
        match plan.validate() {
            Err(Error::Config { path, .. }) => assert_eq!(path, "goals[3].kind"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn json_errors_carry_paths() {
        let err = PlanConfig::from_json(r#"{"initial_income": 1.0, "horizon_months": 2, "inflation_source": {"constant": 0.0}}"#)
            .unwrap_err();
        assert!(matches!(err, Error::Config { .. }), "{err}");
        let err = PlanConfig::from_json(
            r#"{"initial_income": 1.0, "horizon_months": 2, "inflation_source": {"constant": 0.0},
                "goals": [{"id": "a", "kind": "loan", "rate_source": {"constant": 0.0}, "weight_p": 1}]}"#,
        )
        .unwrap_err();
        match err {
            Error::Config { path, .. } => assert_eq!(path, "goals[0].kind"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn income_compounds_with_inflation() {
        let mut plan = two_goal_plan();
        plan.inflation_source = RateSource::Constant(0.02);
        plan.horizon_months = 120;
        let mut rates = zero_rates(&plan);
        rates.insert(INFLATION_RATE_ID.into(), monthly_rate(0.02).unwrap());
        let mut s = PlanState::initial(&plan, rates.clone());
        let alloc = Allocation::residual_only(3);
        for _ in 0..120 {
            s = advance(&s, &alloc, &plan, &rates).unwrap();
            let expect = 1000.0 * 1.02f64.powf(s.month as f64 / 12.0);
            assert!(
                (s.income - expect).abs() <= 1e-12 * expect,
                "month {}",
                s.month
            );
        }
    }

    proptest! {
        #[test]
        fn debt_compounds_without_payment(r in 1e-4f64..0.05, u in 0.01f64..0.99) {
            let x = u / (1.0 + r);
            prop_assert!(step_debt(x, r, 0.0, 1000.0).value > x);
        }

        #[test]
        fn savings_never_increase_outstanding(x in 0.0f64..=1.0, r in 0.0f64..0.05, c in 0.0f64..1e5) {
            prop_assert!(step_savings(x, r, c, 1e5).value <= x);
        }

        #[test]
        fn completed_goals_stay_completed(r in 0.0f64..0.05, pay in 0.0f64..1e4) {
            prop_assert_eq!(step_debt(0.0, r, pay, 1e4).value, 0.0);
            prop_assert_eq!(step_savings(0.0, r, pay, 1e4).value, 0.0);
            prop_assert_eq!(step_retirement(0.0, r, 5000.0, 0.1, 0.0, pay / 1e4, 10.0, 1e6).value, 0.0);
        }

        #[test]
        fn reachable_fractions_stay_in_unit_interval(
            weights in prop::collection::vec(0.0f64..1.0, 3),
            r in -0.01f64..0.05,
            months in 1usize..24,
        ) {
            let plan = two_goal_plan();
            let mut plan = plan;
            plan.horizon_months = months;
            let total: f64 = weights.iter().sum::<f64>() + 1e-9;
            let alloc = Allocation::new(weights.iter().map(|w| (w + 1e-9 / 3.0) / total).collect()).unwrap();
            let rates: RateMap = plan.rate_ids().into_iter().map(|id| (id, r)).collect();
            let mut s = PlanState::initial(&plan, rates.clone());
            for _ in 0..months {
                let before = alloc.clone();
                s = advance(&s, &alloc, &plan, &rates).unwrap();
                prop_assert_eq!(&before, &alloc);
                for &x in &s.fractions_outstanding {
                    prop_assert!((0.0..=1.0).contains(&x));
                }
            }
        }
    }
}
