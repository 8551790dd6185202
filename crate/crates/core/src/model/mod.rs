//! MLP classifier with a pluggable hidden activation.

mod adam;
mod checkpoint;
mod train;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use train::{train, TrainConfig, TrainReport};

use crate::activation::{Activation, ActivationKind, Binding};
use crate::error::{Error, Result};
use crate::tensor::{Matrix, Tape, Var};

pub const DEFAULT_HIDDEN_DIM: usize = 64;
pub const DEFAULT_NUM_LAYERS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Linear layers, counting the output layer.
    pub num_layers: usize,
    pub num_classes: usize,
    pub activation: ActivationKind,
    pub seed: u64,
}

impl MlpConfig {
    pub fn new(input_dim: usize, num_classes: usize, activation: ActivationKind) -> Self {
        MlpConfig {
            input_dim,
            hidden_dim: DEFAULT_HIDDEN_DIM,
            num_layers: DEFAULT_NUM_LAYERS,
            num_classes,
            activation,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.input_dim == 0 {
            problems.push("input_dim must be >= 1".to_string());
        }
        if self.hidden_dim == 0 {
            problems.push("hidden_dim must be >= 1".to_string());
        }
        if self.num_layers < 2 {
            problems.push(format!("num_layers must be >= 2 (got {})", self.num_layers));
        }
        if self.num_classes < 2 {
            problems.push(format!("num_classes must be >= 2 (got {})", self.num_classes));
        }
        if let ActivationKind::Ogab(o) = &self.activation {
            if o.groups == 0 {
                problems.push("OGAB groups must be >= 1".to_string());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// `(fan_in, fan_out)` of every linear layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        (0..self.num_layers)
            .map(|i| {
                let fan_in = if i == 0 { self.input_dim } else { self.hidden_dim };
                let fan_out = if i + 1 == self.num_layers {
                    self.num_classes
                } else {
                    self.hidden_dim
                };
                (fan_in, fan_out)
            })
            .collect()
    }

    /// Learnable scalar count without building the model.
    pub fn param_count(&self) -> usize {
        let linear: usize = self.layer_dims().iter().map(|&(i, o)| i * o + o).sum();
        linear + (self.num_layers - 1) * self.activation.param_count(self.hidden_dim)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Linear {
    /// fan_in × fan_out
    pub weight: Matrix,
    /// 1 × fan_out
    pub bias: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    config: MlpConfig,
    layers: Vec<Linear>,
    activations: Vec<Activation>,
}

impl MlpModel {
    /// Glorot-uniform weights, zero biases; every random draw comes from
    /// `config.seed`.
    pub fn build(config: &MlpConfig) -> Result<MlpModel> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let dims = config.layer_dims();
        let mut layers = Vec::with_capacity(dims.len());
        let mut activations = Vec::with_capacity(dims.len() - 1);
        for (i, &(fan_in, fan_out)) in dims.iter().enumerate() {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weight = Matrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-limit..limit));
            layers.push(Linear {
                weight,
                bias: Matrix::zeros(1, fan_out),
            });
            if i + 1 < dims.len() {
                let seed = rng.next_u64();
                activations.push(Activation::new(&config.activation, fan_out, seed)?);
            }
        }
        Ok(MlpModel {
            config: config.clone(),
            layers,
            activations,
        })
    }

    pub fn from_parts(config: MlpConfig, layers: Vec<Linear>, activations: Vec<Activation>) -> Result<MlpModel> {
        config.validate()?;
        let dims = config.layer_dims();
        if layers.len() != dims.len() || activations.len() + 1 != dims.len() {
            return Err(Error::Config(format!(
                "expected {} linear layers and {} activations, got {} and {}",
                dims.len(),
                dims.len() - 1,
                layers.len(),
                activations.len()
            )));
        }
        for (i, (layer, &(fan_in, fan_out))) in layers.iter().zip(&dims).enumerate() {
            if layer.weight.shape() != (fan_in, fan_out) || layer.bias.shape() != (1, fan_out) {
                return Err(Error::Config(format!(
                    "layer {i}: weight {:?} / bias {:?} do not match {fan_in}->{fan_out}",
                    layer.weight.shape(),
                    layer.bias.shape()
                )));
            }
        }
        for (i, act) in activations.iter().enumerate() {
            if act.kind() != config.activation {
                return Err(Error::Config(format!("activation {i} does not match the config")));
            }
            if act.dim().is_some_and(|d| d != config.hidden_dim) {
                return Err(Error::Config(format!("activation {i} has the wrong width")));
            }
        }
        Ok(MlpModel {
            config,
            layers,
            activations,
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear] {
        &mut self.layers
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    /// Every learnable matrix, in tape-registration order: for each layer
    /// its weight and bias, then the following activation's parameters.
    pub fn params(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            out.push(&layer.weight);
            out.push(&layer.bias);
            if let Some(act) = self.activations.get(i) {
                out.extend(act.params());
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        let mut acts = self.activations.iter_mut();
        for layer in self.layers.iter_mut() {
            out.push(&mut layer.weight);
            out.push(&mut layer.bias);
            if let Some(act) = acts.next() {
                out.extend(act.params_mut());
            }
        }
        out
    }

    pub fn count_parameters(&self) -> usize {
        self.params().iter().map(|m| m.len()).sum()
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.config.input_dim {
            return Err(Error::shape(
                "mlp input",
                x.shape(),
                (x.rows(), self.config.input_dim),
            ));
        }
        Ok(())
    }

    /// Records the forward pass up to the output of linear layer
    /// `stop_after` (post-activation for hidden layers).
    fn forward_until(
        &self,
        tape: &mut Tape,
        x: Var,
        binding: Binding,
        stop_after: usize,
    ) -> Result<(Var, Vec<Var>)> {
        let mut h = x;
        let mut leaves = Vec::new();
        for (i, layer) in self.layers.iter().enumerate().take(stop_after + 1) {
            let w = binding.leaf(tape, &layer.weight);
            let b = binding.leaf(tape, &layer.bias);
            leaves.extend([w, b]);
            let z = tape.matmul(h, w)?;
            h = tape.add_row(z, b)?;
            if let Some(act) = self.activations.get(i) {
                let (out, act_leaves) = act.forward_on(tape, h, binding)?;
                leaves.extend(act_leaves);
                h = out;
            }
        }
        Ok((h, leaves))
    }

    /// Logits on `tape`, plus the parameter leaves in [`MlpModel::params`]
    /// order.
    pub fn forward_on(&self, tape: &mut Tape, x: Var, binding: Binding) -> Result<(Var, Vec<Var>)> {
        let (n, d) = tape.shape(x);
        if d != self.config.input_dim {
            return Err(Error::shape("mlp input", (n, d), (n, self.config.input_dim)));
        }
        self.forward_until(tape, x, binding, self.layers.len() - 1)
    }

    /// n×C logits; no softmax.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let (out, _) = self.forward_on(&mut tape, xv, Binding::Frozen)?;
        Ok(tape.value(out).clone())
    }

    /// Post-activation output of hidden layer `index` (0-based).
    pub fn hidden_output(&self, x: &Matrix, index: usize) -> Result<Matrix> {
        self.check_input(x)?;
        if index >= self.activations.len() {
            return Err(Error::Contract(format!(
                "hidden layer index {index} out of range (model has {} hidden layers)",
                self.activations.len()
            )));
        }
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let (out, _) = self.forward_until(&mut tape, xv, Binding::Frozen, index)?;
        Ok(tape.value(out).clone())
    }

    /// Per-row argmax of the logits, ties to the lowest class.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(self.forward(x)?.argmax_rows())
    }
}
