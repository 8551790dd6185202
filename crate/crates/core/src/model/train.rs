use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activation::Binding;
use crate::error::{Error, Result};
use crate::model::{adam_step, AdamState, MlpModel};
use crate::tensor::{Matrix, Tape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 500,
            batch_size: 500,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            problems.push(format!("learning_rate must be > 0 (got {})", self.learning_rate));
        }
        if self.epochs == 0 {
            problems.push("epochs must be >= 1".to_string());
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be >= 1".to_string());
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            problems.push("adam betas must lie in [0, 1)".to_string());
        }
        if !(self.adam_eps > 0.0) {
            problems.push("adam_eps must be > 0".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Sample-weighted mean training loss of each epoch.
    pub loss_curve: Vec<f64>,
    pub wall_time_seconds: f64,
}

/// Minibatch Adam on mean cross-entropy. Batches come from one seeded
/// shuffle per epoch; the last partial batch is kept.
pub fn train(
    model: &mut MlpModel,
    x: &Matrix,
    labels: &[usize],
    tc: &TrainConfig,
    seed: u64,
) -> Result<TrainReport> {
    tc.validate()?;
    let n = x.rows();
    if labels.len() != n {
        return Err(Error::shape("train", x.shape(), (labels.len(), 1)));
    }
    if n == 0 {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    let classes = model.config().num_classes;
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidLabel { label, classes });
    }
    if x.cols() != model.config().input_dim {
        return Err(Error::shape("train", x.shape(), (n, model.config().input_dim)));
    }

    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut state = AdamState::new();
    let mut loss_curve = Vec::with_capacity(tc.epochs);

    for epoch in 0..tc.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (batch, idx) in order.chunks(tc.batch_size).enumerate() {
            let diverged = |e: Error| match e {
                Error::NonFinite(_) | Error::InvalidInput(_) => Error::Diverged { epoch, batch },
                other => other,
            };
            let xb = x.select_rows(idx);
            let yb: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();

            let mut tape = Tape::new();
            let xv = tape.constant(xb);
            let (logits, leaves) = model.forward_on(&mut tape, xv, Binding::Trainable).map_err(diverged)?;
            let loss = tape.cross_entropy(logits, &yb).map_err(diverged)?;
            let value = tape.scalar(loss)?;
            if !value.is_finite() {
                return Err(Error::Diverged { epoch, batch });
            }
            total += value * idx.len() as f64;
            tape.backward(loss).map_err(diverged)?;

            let grads: Vec<Matrix> = leaves
                .iter()
                .map(|&v| tape.grad(v).cloned().expect("parameters always receive gradients"))
                .collect();
            if grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, batch });
            }
            adam_step(&mut model.params_mut(), &grads, &mut state, tc)?;
        }
        loss_curve.push(total / n as f64);
    }

    Ok(TrainReport {
        loss_curve,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    })
}
