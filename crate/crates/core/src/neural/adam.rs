use serde::{Deserialize, Serialize};

use super::network::PolicyParams;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for a list of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, shapes: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = shapes
            .into_iter()
            .map(|n| (vec![0.0; n], vec![0.0; n]))
            .unzip();
        Self {
            config,
            m,
            v,
            step: 0,
        }
    }

    pub fn for_params(config: AdamConfig, params: &PolicyParams) -> Self {
        Self::new(config, params.tensors().map(Vec::len))
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    /// One descent step on `loss_grads`, tensor by tensor.
    pub fn update<'a>(
        &mut self,
        params: impl IntoIterator<Item = &'a mut Vec<f64>>,
        loss_grads: impl IntoIterator<Item = &'a Vec<f64>>,
    ) -> Result<()> {
        let params: Vec<&mut Vec<f64>> = params.into_iter().collect();
        let grads: Vec<&Vec<f64>> = loss_grads.into_iter().collect();
        let shapes_ok = params.len() == self.m.len()
            && grads.len() == self.m.len()
            && params
                .iter()
                .zip(&grads)
                .zip(&self.m)
                .all(|((p, g), m)| p.len() == m.len() && g.len() == m.len());
        if !shapes_ok {
            return Err(Error::Shape(
                "gradient does not match optimizer state".into(),
            ));
        }
        if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::Training {
                iteration: self.step as usize,
                message: "non-finite gradient".into(),
            });
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

/// ADAM step on the policy parameters given the gradient of the loss
/// (the negated objective).
pub fn adam_step(
    params: &mut PolicyParams,
    loss_grad: &PolicyParams,
    state: &mut AdamState,
) -> Result<()> {
    state.update(params.tensors_mut(), loss_grad.tensors())
}
