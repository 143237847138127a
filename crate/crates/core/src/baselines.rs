//! Rule-based reference policies and the two-goal counterexample where
//! paying goals strictly in priority order stalls.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::goals::{Allocation, GoalSpec, PlanConfig, PlanState, RateSource};
use crate::simulate::{rollout, Rollout, Scenario};

/// Everything to the unfinished stock goal with the largest `weight_p`
/// (ties go to the earlier goal); everything to the residual slot once all
/// stock goals are complete. Flow goals receive nothing.
pub fn waterfall_policy(state: &PlanState, config: &PlanConfig) -> Allocation {
    let slots = config.slot_count();
    let mut best: Option<(usize, f64)> = None;
    for (k, &g) in config.stock_goals().iter().enumerate() {
        if state.fractions_outstanding[k] <= 0.0 {
            continue;
        }
        let p = config.goals[g].weight_p;
        if best.map_or(true, |(_, bp)| p > bp) {
            best = Some((g, p));
        }
    }
    match best {
        Some((g, _)) => Allocation::all_to(slots, g),
        None => Allocation::residual_only(slots),
    }
}

/// Equal shares to every unfinished stock goal; residual once all are done.
pub fn even_split_policy(state: &PlanState, config: &PlanConfig) -> Allocation {
    let slots = config.slot_count();
    let open: Vec<usize> = config
        .stock_goals()
        .into_iter()
        .enumerate()
        .filter(|&(k, _)| state.fractions_outstanding[k] > 0.0)
        .map(|(_, g)| g)
        .collect();
    if open.is_empty() {
        return Allocation::residual_only(slots);
    }
    let mut fractions = vec![0.0; slots];
    let share = 1.0 / open.len() as f64;
    for g in open {
        fractions[g] = share;
    }
    Allocation::new(fractions).expect("equal shares sum to one")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Waterfall,
    EvenSplit,
}

impl Baseline {
    pub const ALL: [Baseline; 2] = [Baseline::Waterfall, Baseline::EvenSplit];

    pub fn as_str(self) -> &'static str {
        match self {
            Baseline::Waterfall => "waterfall",
            Baseline::EvenSplit => "even_split",
        }
    }

    pub fn allocate(self, state: &PlanState, config: &PlanConfig) -> Allocation {
        match self {
            Baseline::Waterfall => waterfall_policy(state, config),
            Baseline::EvenSplit => even_split_policy(state, config),
        }
    }

    pub fn rollout(self, scenario: &Scenario<'_>) -> Result<Rollout> {
        rollout(scenario, &|plan: &PlanConfig,
                            state: &PlanState,
                            _: &[f64]| {
            Ok(self.allocate(state, plan))
        })
    }
}

/// Per-step rate of the second goal in [`counterexample_scenario`].
pub const COUNTEREXAMPLE_RATE: f64 = 0.001;
/// Horizon of [`counterexample_scenario`].
pub const COUNTEREXAMPLE_HORIZON: usize = 50;

/// Expected dollars outstanding for the two goals, from month 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DollarPath {
    pub goal1: Vec<f64>,
    pub goal2: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Counterexample {
    pub plan: PlanConfig,
    /// Months `0..=50`.
    pub waterfall: DollarPath,
    /// Months `0..=2`.
    pub even_split: DollarPath,
}

/// $1000 a month against a $1000 zero-rate debt (`p = 1000`) and a debt of
/// $1,000,000 / 1.001 growing 0.1% per step (`p = 1`). Paying the urgent
/// goal first leaves the second one's interest equal to the whole paycheck,
/// so the large debt never shrinks; splitting evenly first does not stall.
///
/// Debts are not capped at their starting balance here: the large debt
/// must be able to grow past its month-0 value.
pub fn counterexample_scenario() -> Counterexample {
    let big = 1e6 / (1.0 + COUNTEREXAMPLE_RATE);
    let mut plan = PlanConfig {
        initial_income: 1000.0,
        horizon_months: COUNTEREXAMPLE_HORIZON,
        inflation_source: RateSource::Constant(0.0),
        goals: vec![
            GoalSpec::debt("goal1", 1000.0, RateSource::Constant(0.0), 1000.0),
            GoalSpec::debt("goal2", big, RateSource::PerStep(COUNTEREXAMPLE_RATE), 1.0),
        ],
        dynamics: Default::default(),
    };
    plan.dynamics.debt_upper_clamp = false;

    let months = COUNTEREXAMPLE_HORIZON + 1;
    let mut waterfall = DollarPath {
        goal1: vec![0.0; months],
        goal2: vec![1e6; months],
    };
    waterfall.goal1[0] = 1000.0;
    waterfall.goal2[0] = big;
    Counterexample {
        plan,
        waterfall,
        even_split: DollarPath {
            goal1: vec![1000.0, 500.0, 0.0],
            goal2: vec![big, 999_500.0, 999_999.5],
        },
    }
}

/// Dollars outstanding per stock goal (stock order) at every month.
pub fn dollars_outstanding(plan: &PlanConfig, run: &Rollout) -> Result<Vec<Vec<f64>>> {
    let totals = plan
        .stock_goals()
        .into_iter()
        .map(|g| plan.goals[g].total())
        .collect::<Result<Vec<_>>>()?;
    Ok(run
        .steps
        .iter()
        .map(|(s, _)| {
            s.fractions_outstanding
                .iter()
                .zip(&totals)
                .map(|(x, g)| x * g)
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::goals::RateMap;
    use crate::rates::constant_trajectory;

    fn state(fractions: Vec<f64>) -> PlanState {
        PlanState {
            month: 0,
            fractions_outstanding: fractions,
            income: 1000.0,
            current_rates: RateMap::new(),
        }
    }

    #[test]
    fn waterfall_follows_priority() {
        let plan = counterexample_scenario().plan;
        assert_eq!(
            waterfall_policy(&state(vec![1.0, 1.0]), &plan).fractions(),
            [1.0, 0.0, 0.0]
        );
        assert_eq!(
            waterfall_policy(&state(vec![0.0, 1.0]), &plan).fractions(),
            [0.0, 1.0, 0.0]
        );
        assert_eq!(
            waterfall_policy(&state(vec![0.0, 0.0]), &plan).fractions(),
            [0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn waterfall_breaks_ties_by_config_order() {
        let mut plan = counterexample_scenario().plan;
        plan.goals[1].weight_p = 1000.0;
        assert_eq!(
            waterfall_policy(&state(vec![1.0, 1.0]), &plan).fractions(),
            [1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn waterfall_skips_flow_goals() {
        let plan = crate::presets::reference_plan();
        let s = state(vec![1.0; 5]);
        let a = waterfall_policy(&s, &plan);
        assert_eq!(a.get(0), 1.0);
        assert_eq!(a.get(5) + a.get(6), 0.0);
    }

    #[test]
    fn even_split_shares_open_goals() {
        let plan = counterexample_scenario().plan;
        assert_eq!(
            even_split_policy(&state(vec![1.0, 0.3]), &plan).fractions(),
            [0.5, 0.5, 0.0]
        );
        assert_eq!(
            even_split_policy(&state(vec![0.0, 0.3]), &plan).fractions(),
            [0.0, 1.0, 0.0]
        );
        assert_eq!(
            even_split_policy(&state(vec![0.0, 0.0]), &plan).fractions(),
            [0.0, 0.0, 1.0]
        );
    }

    fn run(baseline: Baseline) -> (Counterexample, Rollout) {
        let a = counterexample_scenario();
        let rates = constant_trajectory(&a.plan, COUNTEREXAMPLE_HORIZON).unwrap();
        let sc = Scenario::new(&a.plan, &rates).unwrap();
        let r = baseline.rollout(&sc).unwrap();
        (a, r)
    }

    #[test]
    fn counterexample_waterfall_stalls() {
        let (a, r) = run(Baseline::Waterfall);
        let d = dollars_outstanding(&a.plan, &r).unwrap();
        for (t, row) in d.iter().enumerate() {
            assert!((row[0] - a.waterfall.goal1[t]).abs() <= 1e-6, "t={t}");
            assert!(
                (row[1] - a.waterfall.goal2[t]).abs() <= 1e-6,
                "t={t}: {}",
                row[1]
            );
        }
    }

    #[test]
    fn counterexample_even_split_progresses() {
        let (a, r) = run(Baseline::EvenSplit);
        let d = dollars_outstanding(&a.plan, &r).unwrap();
        for t in 0..3 {
            assert!((d[t][0] - a.even_split.goal1[t]).abs() <= 1e-6, "t={t}");
            assert!(
                (d[t][1] - a.even_split.goal2[t]).abs() <= 1e-6,
                "t={t}: {}",
                d[t][1]
            );
        }
        assert!(d.windows(2).skip(2).all(|w| w[1][1] < w[0][1]));
    }

    #[test]
    fn counterexample_utility_ordering_depends_on_horizon() {
        // Over 50 months the late start on the urgent goal costs the even
        // split about 500 utility, while its head start on the large debt
        // is worth only ~5e-4 per month; the waterfall scores higher.
        let (_, w) = run(Baseline::Waterfall);
        let (_, e) = run(Baseline::EvenSplit);
        assert!(w.value > e.value, "{} vs {}", w.value, e.value);
        assert!(w.value - e.value > 400.0);
    }
}
