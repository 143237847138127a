//! Policy-gradient training through the differentiable simulator.
//!
//! Each iteration unrolls the plan under the current network on a tape,
//! backpropagates the horizon objective to the parameters and takes one
//! ADAM ascent step. In stochastic mode the objective and gradient are
//! averaged over a batch of historical rate trajectories.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::goals::PlanConfig;
use crate::neural::{adam_step, AdamConfig, AdamState, Architecture, PolicyParams};
use crate::rates::{constant_trajectory, RateTrajectory};
use crate::simulate::{
    self, objective_and_gradient, objective_value, FeatureLayout, Rollout, Scenario,
};

/// Offset mixed into the seed for the batch sampler so that it never shares
/// a stream with parameter initialisation.
const BATCH_STREAM: u64 = 0x6261_7463_685f_7273;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ConstantRates,
    StochasticRates,
}

/// How the `n` trajectories of each stochastic iteration are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Batching {
    /// `n` windows drawn with replacement from the dataset every iteration.
    #[default]
    Resample,
    /// The whole dataset every iteration.
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub mode: Mode,
    pub batching: Batching,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            adam: AdamConfig::default(),
            seed: 0,
            hidden: vec![64, 64],
            batch_size: 8,
            mode: Mode::ConstantRates,
            batching: Batching::Resample,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::config("iterations", "must be >= 1"));
        }
        if self.mode == Mode::StochasticRates && self.batch_size < 1 {
            return Err(Error::config(
                "batch_size",
                "must be >= 1 in stochastic mode",
            ));
        }
        let a = &self.adam;
        if !(a.learning_rate.is_finite() && a.learning_rate > 0.0) {
            return Err(Error::config(
                "adam.learning_rate",
                "must be a positive number",
            ));
        }
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2)) {
            return Err(Error::config("adam", "betas must lie in [0, 1)"));
        }
        if !(a.epsilon.is_finite() && a.epsilon > 0.0) {
            return Err(Error::config("adam.epsilon", "must be a positive number"));
        }
        if self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::config("hidden", "layer widths must be positive"));
        }
        Ok(())
    }

    /// Network shape for `plan` under this config.
    pub fn architecture(&self, plan: &PlanConfig) -> Architecture {
        Architecture::new(
            FeatureLayout::for_plan(plan).dim(),
            &self.hidden,
            plan.slot_count(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub mode: Mode,
    pub seed: u64,
    pub iterations: usize,
    /// Objective before each update; length `iterations`.
    pub values: Vec<f64>,
    /// Objective of the final parameters.
    pub final_value: f64,
    pub duration_secs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
}

impl TrainReport {
    pub fn initial_value(&self) -> f64 {
        self.values[0]
    }
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub report: TrainReport,
    pub params: PolicyParams,
}

/// Called after each iteration with its index and objective; return
/// `false` to stop early.
pub type Observer<'a> = dyn FnMut(usize, f64) -> bool + 'a;

/// Deterministic unroll of `params` on one rate trajectory.
pub fn rollout(
    params: &PolicyParams,
    plan: &PlanConfig,
    rates: &RateTrajectory,
) -> Result<Rollout> {
    let scenario = Scenario::new(plan, rates)?;
    simulate::rollout(&scenario, params)
}

/// Mean objective and mean gradient over `scenarios`, reduced in order.
pub fn batch_value_and_grad(
    params: &PolicyParams,
    scenarios: &[&Scenario<'_>],
) -> Result<(f64, PolicyParams)> {
    let (first, rest) = scenarios
        .split_first()
        .ok_or_else(|| Error::Data("empty trajectory batch".into()))?;
    let (mut value, mut grad) = objective_and_gradient(params, first)?;
    for sc in rest {
        let (v, g) = objective_and_gradient(params, sc)?;
        value += v;
        for (acc, part) in grad.tensors_mut().zip(g.tensors()) {
            acc.iter_mut().zip(part).for_each(|(a, b)| *a += b);
        }
    }
    let n = scenarios.len() as f64;
    if scenarios.len() > 1 {
        value /= n;
        for t in grad.tensors_mut() {
            t.iter_mut().for_each(|g| *g /= n);
        }
    }
    Ok((value, grad))
}

pub fn train_constant(plan: &PlanConfig, train: &TrainConfig) -> Result<Trained> {
    train_constant_observed(plan, train, &mut |_, _| true)
}

pub fn train_constant_observed(
    plan: &PlanConfig,
    train: &TrainConfig,
    observer: &mut Observer<'_>,
) -> Result<Trained> {
    plan.validate()?;
    if !plan.all_rates_constant() {
        return Err(Error::config(
            "rate_source",
            "constant-rate training needs constant rate sources; use stochastic mode for series",
        ));
    }
    let rates = constant_trajectory(plan, plan.horizon_months)?;
    let scenario = Scenario::new(plan, &rates)?;
    optimize(plan, &[scenario], train, Mode::ConstantRates, 1, observer)
}

pub fn train_stochastic(
    plan: &PlanConfig,
    dataset: &[RateTrajectory],
    train: &TrainConfig,
) -> Result<Trained> {
    train_stochastic_observed(plan, dataset, train, &mut |_, _| true)
}

pub fn train_stochastic_observed(
    plan: &PlanConfig,
    dataset: &[RateTrajectory],
    train: &TrainConfig,
    observer: &mut Observer<'_>,
) -> Result<Trained> {
    plan.validate()?;
    if dataset.is_empty() {
        return Err(Error::Data(
            "stochastic training needs at least one rate trajectory".into(),
        ));
    }
    let filled = dataset
        .iter()
        .map(|t| t.clone().with_plan_constants(plan))
        .collect::<Result<Vec<_>>>()?;
    let scenarios = filled
        .iter()
        .map(|t| Scenario::new(plan, t))
        .collect::<Result<Vec<_>>>()?;
    optimize(
        plan,
        &scenarios,
        train,
        Mode::StochasticRates,
        train.batch_size,
        observer,
    )
}

fn optimize(
    plan: &PlanConfig,
    scenarios: &[Scenario<'_>],
    train: &TrainConfig,
    mode: Mode,
    batch_size: usize,
    observer: &mut Observer<'_>,
) -> Result<Trained> {
    train.validate()?;
    let started = Instant::now();
    let mut params = PolicyParams::init(&train.architecture(plan), train.seed);
    let mut adam = AdamState::for_params(train.adam, &params);
    let mut batch_rng = ChaCha8Rng::seed_from_u64(train.seed ^ BATCH_STREAM);
    let mut values = Vec::with_capacity(train.iterations);

    for iteration in 0..train.iterations {
        let batch: Vec<&Scenario<'_>> = match (mode, train.batching) {
            (Mode::StochasticRates, Batching::Resample) => (0..batch_size)
                .map(|_| &scenarios[batch_rng.gen_range(0..scenarios.len())])
                .collect(),
            _ => scenarios.iter().collect(),
        };
        let (value, mut grad) = batch_value_and_grad(&params, &batch)?;
        if !value.is_finite() {
            return Err(Error::Training {
                iteration,
                message: format!("objective is {value}"),
            });
        }
        values.push(value);
        // ascend on V: the optimizer descends on the loss -V
        for t in grad.tensors_mut() {
            t.iter_mut().for_each(|g| *g = -*g);
        }
        adam_step(&mut params, &grad, &mut adam).map_err(|e| match e {
            Error::Training { message, .. } => Error::Training { iteration, message },
            other => other,
        })?;
        if !observer(iteration, value) {
            break;
        }
    }

    let final_value = scenarios
        .iter()
        .map(|sc| objective_value(&params, sc))
        .sum::<Result<f64>>()?
        / scenarios.len() as f64;
    if !final_value.is_finite() {
        return Err(Error::Training {
            iteration: values.len(),
            message: format!("final objective is {final_value}"),
        });
    }
    Ok(Trained {
        report: TrainReport {
            mode,
            seed: train.seed,
            iterations: values.len(),
            values,
            final_value,
            duration_secs: started.elapsed().as_secs_f64(),
            checkpoint: None,
        },
        params,
    })
}
