//! Cross-module properties checked on random policies, plans and windows.

use paycheck_core::baselines::waterfall_policy;
use paycheck_core::goals::{PlanState, SIMPLEX_TOLERANCE};
use paycheck_core::neural::{Architecture, PolicyParams};
use paycheck_core::rates::{bundled_series, constant_trajectory, sample_windows};
use paycheck_core::simulate::{objective_and_gradient, FeatureLayout, Scenario};
use paycheck_core::{presets, trainer};
use proptest::prelude::*;

fn assert_simplex(fractions: &[f64]) {
    assert!(fractions.iter().all(|&f| f >= 0.0), "{fractions:?}");
    let sum: f64 = fractions.iter().sum();
    assert!((sum - 1.0).abs() <= SIMPLEX_TOLERANCE, "sum {sum}");
}

/// Small network on a shortened reference plan, weights spread by `scale`.
fn random_policy(
    seed: u64,
    scale: f64,
    horizon: usize,
) -> (paycheck_core::goals::PlanConfig, PolicyParams) {
    let mut plan = presets::reference_plan();
    plan.horizon_months = horizon;
    let arch = Architecture::new(
        FeatureLayout::for_plan(&plan).dim(),
        &[8, 8],
        plan.slot_count(),
    );
    let mut params = PolicyParams::init(&arch, seed);
    let flat: Vec<f64> = params.to_flat().iter().map(|w| w * scale).collect();
    params.set_flat(&flat).unwrap();
    (plan, params)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn policy_output_is_on_the_simplex(
        seed in any::<u64>(),
        scale in 0.1f64..50.0,
        features in prop::collection::vec(-1e3f64..1e3, 12),
    ) {
        let (_, params) = random_policy(seed, scale, 12);
        assert_simplex(params.policy_forward(&features).unwrap().fractions());
    }

    #[test]
    fn random_policies_keep_states_valid_and_value_nonpositive(
        seed in any::<u64>(),
        scale in 0.1f64..20.0,
        clamp in any::<bool>(),
    ) {
        let (mut plan, params) = random_policy(seed, scale, 24);
        plan.dynamics.debt_upper_clamp = clamp;
        // without the upper clamp an underpaid debt may outgrow its balance
        let upper = if clamp { 1.0 } else { f64::INFINITY };
        let rates = constant_trajectory(&plan, plan.horizon_months).unwrap();
        let run = trainer::rollout(&params, &plan, &rates).unwrap();
        prop_assert_eq!(run.steps.len(), plan.horizon_months + 1);
        prop_assert!(run.steps[0].0.fractions_outstanding.iter().all(|&x| x == 1.0));
        for (state, allocation) in &run.steps {
            prop_assert!(state.fractions_outstanding.iter().all(|&x| (0.0..=upper).contains(&x)));
            assert_simplex(allocation.fractions());
        }
        prop_assert!(run.value <= 0.0);
        prop_assert!(run.utilities.iter().all(|u| u.total <= 0.0));
    }

    #[test]
    fn every_parameter_receives_a_gradient(seed in any::<u64>()) {
        let (plan, params) = random_policy(seed, 1.0, 6);
        let rates = constant_trajectory(&plan, plan.horizon_months).unwrap();
        let scenario = Scenario::new(&plan, &rates).unwrap();
        let (value, grad) = objective_and_gradient(&params, &scenario).unwrap();
        prop_assert!(value <= 0.0);
        prop_assert_eq!(grad.architecture(), params.architecture());
        prop_assert_eq!(grad.num_params(), params.num_params());
        prop_assert!(grad.is_finite());
    }

    #[test]
    fn waterfall_funds_the_most_preferred_open_goal(
        weights in prop::collection::vec(0.0f64..10.0, 5),
        fractions in prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..=1.0], 5),
    ) {
        let mut plan = presets::reference_plan();
        let stock = plan.stock_goals();
        for (&g, &w) in stock.iter().zip(&weights) {
            plan.goals[g].weight_p = w;
        }
        let mut state = PlanState::initial(&plan, Default::default());
        state.fractions_outstanding = fractions[..stock.len()].to_vec();
        let allocation = waterfall_policy(&state, &plan);
        assert_simplex(allocation.fractions());

        let open: Vec<usize> = (0..stock.len()).filter(|&k| state.fractions_outstanding[k] > 0.0).collect();
        let target = match open.iter().map(|&k| weights[k]).reduce(f64::max) {
            // first open goal carrying the top weight
            Some(top) => stock[*open.iter().find(|&&k| weights[k] == top).unwrap()],
            None => plan.residual_slot(),
        };
        prop_assert_eq!(allocation.get(target), 1.0);
    }

    #[test]
    fn sampled_windows_are_aligned(seed in any::<u64>(), count in 1usize..6, horizon in 1usize..240) {
        let windows = sample_windows(&bundled_series(), horizon, count, seed).unwrap();
        prop_assert_eq!(windows.len(), count);
        for w in &windows {
            prop_assert!(w.start.is_some());
            prop_assert!(w.rates.values().all(|series| series.len() == horizon + 1));
        }
    }
}
