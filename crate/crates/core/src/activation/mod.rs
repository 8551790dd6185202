//! Activation functions placed after each hidden linear layer.

mod ogab;

use serde::{Deserialize, Serialize};

pub use ogab::{
    cayley, orthogonal_map, orthogonality_error, skew, Binding, GroupGate, OgabLayer, OgabOptions,
    Smooth, DEFAULT_GROUPS, SKEW_TOLERANCE,
};

use crate::error::{Error, Result};
use crate::tensor::{self, Matrix, Tape, Var};

pub const PRELU_INIT: f64 = 0.25;

/// Which activation to build; carries structure but no parameter values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ActivationKind {
    /// No activation at all.
    Identity,
    Relu,
    Tanh,
    Sigmoid,
    /// Row-wise softmax over the hidden units.
    Softmax,
    Softplus,
    Prelu,
    Ogab(OgabOptions),
}

impl ActivationKind {
    /// Parses the names used in experiment configs. `groups` and `sigma`
    /// only matter for the OGAB variants.
    pub fn parse(name: &str, groups: usize, sigma: Smooth) -> Result<ActivationKind> {
        let ogab = OgabOptions {
            groups,
            sigma,
            ..OgabOptions::default()
        };
        Ok(match name.to_ascii_lowercase().as_str() {
            "identity" | "baseline" | "none" => ActivationKind::Identity,
            "relu" => ActivationKind::Relu,
            "tanh" => ActivationKind::Tanh,
            "sigmoid" => ActivationKind::Sigmoid,
            "softmax" => ActivationKind::Softmax,
            "softplus" => ActivationKind::Softplus,
            "prelu" => ActivationKind::Prelu,
            "ogab" => ActivationKind::Ogab(ogab),
            "ogab-no-orth" => ActivationKind::Ogab(ogab.without_orthogonality()),
            "ogab-no-bias" => ActivationKind::Ogab(ogab.without_group_bias()),
            other => return Err(Error::Config(format!("unknown activation `{other}`"))),
        })
    }

    /// Inverse of [`ActivationKind::parse`], ignoring `groups` and `sigma`.
    pub fn name(&self) -> &'static str {
        match self {
            ActivationKind::Identity => "identity",
            ActivationKind::Relu => "relu",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Softmax => "softmax",
            ActivationKind::Softplus => "softplus",
            ActivationKind::Prelu => "prelu",
            ActivationKind::Ogab(o) => match (o.orthogonal, o.group_bias) {
                (true, true) => "ogab",
                (false, true) => "ogab-no-orth",
                (true, false) => "ogab-no-bias",
                (false, false) => "ogab-bare",
            },
        }
    }

    pub fn groups(&self) -> Option<usize> {
        match self {
            ActivationKind::Ogab(o) => Some(o.groups),
            _ => None,
        }
    }

    pub fn is_ogab(&self) -> bool {
        matches!(self, ActivationKind::Ogab(_))
    }

    pub fn param_count(&self, dim: usize) -> usize {
        match self {
            ActivationKind::Prelu => dim,
            ActivationKind::Ogab(o) => o.param_count(dim),
            _ => 0,
        }
    }
}

/// An activation instance, owning its parameters if it has any.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
    Softmax,
    Softplus,
    Prelu { alpha: Matrix },
    Ogab(OgabLayer),
}

impl Activation {
    pub fn new(kind: &ActivationKind, dim: usize, seed: u64) -> Result<Activation> {
        Ok(match kind {
            ActivationKind::Identity => Activation::Identity,
            ActivationKind::Relu => Activation::Relu,
            ActivationKind::Tanh => Activation::Tanh,
            ActivationKind::Sigmoid => Activation::Sigmoid,
            ActivationKind::Softmax => Activation::Softmax,
            ActivationKind::Softplus => Activation::Softplus,
            ActivationKind::Prelu => Activation::Prelu {
                alpha: Matrix::filled(1, dim, PRELU_INIT),
            },
            ActivationKind::Ogab(opts) => Activation::Ogab(OgabLayer::init(dim, opts, seed)?),
        })
    }

    pub fn kind(&self) -> ActivationKind {
        match self {
            Activation::Identity => ActivationKind::Identity,
            Activation::Relu => ActivationKind::Relu,
            Activation::Tanh => ActivationKind::Tanh,
            Activation::Sigmoid => ActivationKind::Sigmoid,
            Activation::Softmax => ActivationKind::Softmax,
            Activation::Softplus => ActivationKind::Softplus,
            Activation::Prelu { .. } => ActivationKind::Prelu,
            Activation::Ogab(layer) => ActivationKind::Ogab(layer.options()),
        }
    }

    pub fn params(&self) -> Vec<&Matrix> {
        match self {
            Activation::Prelu { alpha } => vec![alpha],
            Activation::Ogab(layer) => layer.params(),
            _ => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            Activation::Prelu { alpha } => vec![alpha],
            Activation::Ogab(layer) => layer.params_mut(),
            _ => vec![],
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|m| m.len()).sum()
    }

    /// Expected input width, when the activation has parameters.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Activation::Prelu { alpha } => Some(alpha.cols()),
            Activation::Ogab(layer) => Some(layer.dim()),
            _ => None,
        }
    }

    pub fn forward_on(&self, tape: &mut Tape, x: Var, binding: Binding) -> Result<(Var, Vec<Var>)> {
        match self {
            Activation::Identity => Ok((x, vec![])),
            Activation::Relu => Ok((tape.relu(x)?, vec![])),
            Activation::Tanh => Ok((tape.tanh(x)?, vec![])),
            Activation::Sigmoid => Ok((tape.sigmoid(x)?, vec![])),
            Activation::Softmax => Ok((tape.softmax_rows(x)?, vec![])),
            Activation::Softplus => Ok((tape.softplus(x)?, vec![])),
            Activation::Prelu { alpha } => {
                let a = binding.leaf(tape, alpha);
                Ok((tape.prelu(x, a)?, vec![a]))
            }
            Activation::Ogab(layer) => layer.forward_on(tape, x, binding),
        }
    }

    /// Applies the activation to a batch.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            Activation::Identity => Ok(x.clone()),
            Activation::Relu => Ok(tensor::ops::relu(x)),
            Activation::Tanh => Ok(tensor::ops::tanh(x)),
            Activation::Sigmoid => Ok(tensor::ops::sigmoid(x)),
            Activation::Softmax => tensor::softmax_rows(x),
            Activation::Softplus => Ok(tensor::ops::softplus(x)),
            Activation::Prelu { alpha } => tensor::ops::prelu(x, alpha),
            Activation::Ogab(layer) => layer.forward(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baselines() {
        let x = Matrix::from_rows(&[[-2.0, 0.0, 1.5]]).unwrap();
        assert_eq!(Activation::Identity.apply(&x).unwrap(), x);
        let prelu = Activation::new(&ActivationKind::Prelu, 3, 0).unwrap();
        assert_eq!(prelu.apply(&x).unwrap().as_slice(), &[-0.5, 0.0, 1.5]);
        let sm = Activation::Softmax.apply(&Matrix::zeros(1, 2)).unwrap();
        assert_eq!(sm.as_slice(), &[0.5, 0.5]);
        assert_eq!(Activation::Relu.apply(&x).unwrap().as_slice(), &[0.0, 0.0, 1.5]);
    }

    #[test]
    fn names_round_trip() {
        for name in [
            "identity", "relu", "tanh", "sigmoid", "softmax", "softplus", "prelu", "ogab",
            "ogab-no-orth", "ogab-no-bias",
        ] {
            let kind = ActivationKind::parse(name, 5, Smooth::Tanh).unwrap();
            assert_eq!(kind.name(), name);
        }
        assert!(ActivationKind::parse("swish", 5, Smooth::Tanh).is_err());
    }

    #[test]
    fn tape_and_direct_paths_agree() {
        let x = Matrix::from_fn(4, 3, |i, j| (i as f64 - 1.5) * (j as f64 + 0.5));
        for name in ["relu", "tanh", "sigmoid", "softmax", "softplus", "prelu", "ogab"] {
            let kind = ActivationKind::parse(name, 2, Smooth::Tanh).unwrap();
            let act = Activation::new(&kind, 3, 9).unwrap();
            let mut tape = Tape::new();
            let xv = tape.constant(x.clone());
            let (y, leaves) = act.forward_on(&mut tape, xv, Binding::Trainable).unwrap();
            assert_eq!(leaves.len(), act.params().len());
            assert_eq!(tape.value(y), &act.apply(&x).unwrap(), "{name}");
        }
    }
}
