use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::{softmax, Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::goals::Allocation;

pub const CHECKPOINT_FORMAT: &str = "paycheck-policy";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden: &[usize], output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: hidden.to_vec(),
            output_dim,
            activation: Activation::Tanh,
        }
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden);
        w.push(self.output_dim);
        w
    }
}

/// Fully connected layer, `weights` row-major with `outputs` rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

/// Policy network: tanh hidden layers and a softmax head over allocation
/// slots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub activation: Activation,
    pub layers: Vec<Dense>,
}

/// Tape handles for every parameter tensor, in [`PolicyParams::tensors`] order.
#[derive(Clone, Debug)]
pub struct ParamVars {
    layers: Vec<(Var, Var)>,
}

impl PolicyParams {
    /// Symmetric uniform initialization in `[-a, a]`, `a = sqrt(6 / (fan_in + fan_out))`,
    /// zero biases.
    pub fn init(arch: &Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let widths = arch.widths();
        let layers = widths
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let a = (6.0 / (inputs + outputs) as f64).sqrt();
                Dense {
                    inputs,
                    outputs,
                    weights: (0..inputs * outputs)
                        .map(|_| rng.gen_range(-a..=a))
                        .collect(),
                    bias: vec![0.0; outputs],
                }
            })
            .collect();
        Self {
            activation: arch.activation,
            layers,
        }
    }

    /// Same shape, every entry zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_dim: self.layers[0].inputs,
            hidden: self.layers[..self.layers.len() - 1]
                .iter()
                .map(|l| l.outputs)
                .collect(),
            output_dim: self.layers.last().map_or(0, |l| l.outputs),
            activation: self.activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    /// Weight and bias of each layer, in order.
    pub fn tensors(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.layers.iter().flat_map(|l| [&l.weights, &l.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weights, &mut l.bias])
    }

    pub fn num_params(&self) -> usize {
        self.tensors().map(Vec::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Flat copy of every parameter in tensor order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().flatten().copied().collect()
    }

    /// Overwrite parameters from a flat slice in tensor order.
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.num_params()
            )));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim() {
            return Err(Error::config(
                "features",
                format!("network expects {} features, got {len}", self.input_dim()),
            ));
        }
        Ok(())
    }

    /// Softmax output for `features`, computed without a tape.
    pub fn probabilities(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.check_input(features.len())?;
        let (last, hidden) = self.layers.split_last().expect("at least one layer");
        let mut h = features.to_vec();
        for layer in hidden {
            h = layer.apply(&h);
            h.iter_mut().for_each(|v| *v = v.tanh());
        }
        Ok(softmax(&last.apply(&h)))
    }

    pub fn policy_forward(&self, features: &[f64]) -> Result<Allocation> {
        Allocation::new(self.probabilities(features)?)
    }

    /// Records every parameter tensor as a tape leaf.
    pub fn record(&self, tape: &mut Tape) -> ParamVars {
        ParamVars {
            layers: self
                .layers
                .iter()
                .map(|l| (tape.leaf(l.weights.clone()), tape.leaf(l.bias.clone())))
                .collect(),
        }
    }

    /// Tape-recorded forward pass; returns the softmax node.
    pub fn forward_on_tape(&self, tape: &mut Tape, vars: &ParamVars, features: Var) -> Result<Var> {
        self.check_input(tape.value(features).len())?;
        let mut h = features;
        let n = self.layers.len();
        for (k, (layer, (w, b))) in self.layers.iter().zip(&vars.layers).enumerate() {
            let z = tape.matvec(*w, h, layer.outputs, layer.inputs);
            let z = tape.add(z, *b);
            h = if k + 1 < n { tape.tanh(z) } else { z };
        }
        Ok(tape.softmax(h))
    }

    /// Collects the gradient for every parameter in the shape of `self`.
    pub fn gradient_from(&self, grads: &Gradients, vars: &ParamVars) -> Result<PolicyParams> {
        let mut out = self.clone();
        for (layer, (w, b)) in out.layers.iter_mut().zip(&vars.layers) {
            layer.weights = grads.wrt(*w, layer.weights.len())?;
            layer.bias = grads.wrt(*b, layer.bias.len())?;
        }
        Ok(out)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            architecture: self.architecture(),
            layers: self.layers.clone(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint())?;
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Loads a checkpoint; `expected` rejects architecture mismatches.
    pub fn load(path: impl AsRef<Path>, expected: Option<&Architecture>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        ckpt.into_params(expected)
    }
}

/// Serialized [`PolicyParams`] with an architecture header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    pub layers: Vec<Dense>,
}

impl Checkpoint {
    pub fn into_params(self, expected: Option<&Architecture>) -> Result<PolicyParams> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let params = PolicyParams {
            activation: self.architecture.activation,
            layers: self.layers,
        };
        let widths = self.architecture.widths();
        let chained = params.layers.len() + 1 == widths.len()
            && params.layers.iter().zip(widths.windows(2)).all(|(l, w)| {
                l.inputs == w[0]
                    && l.outputs == w[1]
                    && l.weights.len() == w[0] * w[1]
                    && l.bias.len() == w[1]
            });
        if !chained {
            return Err(Error::Shape(
                "checkpoint layers do not match its architecture header".into(),
            ));
        }
        if let Some(exp) = expected {
            if *exp != self.architecture {
                return Err(Error::Shape(format!(
                    "checkpoint architecture {:?} does not match expected {:?}",
                    self.architecture, exp
                )));
            }
        }
        if !params.is_finite() {
            return Err(Error::Validation(
                "checkpoint holds non-finite parameters".into(),
            ));
        }
        Ok(params)
    }
}

/// Value and parameter gradient of a scalar recorded on a fresh tape.
pub fn value_and_grad<F>(params: &PolicyParams, f: F) -> Result<(f64, PolicyParams)>
where
    F: FnOnce(&mut Tape, &ParamVars) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = params.record(&mut tape);
    let out = f(&mut tape, &vars)?;
    let value = tape.scalar_value(out);
    let grads = tape.backward(out)?;
    Ok((value, params.gradient_from(&grads, &vars)?))
}
