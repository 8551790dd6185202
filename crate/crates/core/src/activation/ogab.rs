//! Orthogonal activation with an implicitly learned group-aware bias.
//!
//! Forward pass for an input batch `X` (n×d):
//!
//! ```text
//! S = A − Aᵀ                      skew-symmetric
//! Q = (I + S)(I − S)⁻¹            Cayley transform, orthogonal
//! U = X Qᵀ                        norm-preserving feature map
//! P = softmax_rows(X M + B)       per-sample distribution over G groups
//! V = P F                         probability-weighted group bias
//! Y = s ⊙ σ(U + V)
//! ```
//!
//! `(I + S)` and `(I − S)⁻¹` commute, so `Q` is obtained as a single
//! linear solve `(I − S) Q = (I + S)` without forming an inverse.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{self, Matrix, Tape, Var};

/// Tolerance on `‖S + Sᵀ‖_max` accepted by [`cayley`].
pub const SKEW_TOLERANCE: f64 = 1e-12;

/// Initial half-width of the uniform draw for `A`; keeps `Q` near `I`.
const SKEW_SOURCE_INIT: f64 = 0.01;

/// The smooth nonlinearity applied after the bias is added.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Smooth {
    #[default]
    Tanh,
    Sigmoid,
    Softplus,
}

impl Smooth {
    pub fn name(self) -> &'static str {
        match self {
            Smooth::Tanh => "tanh",
            Smooth::Sigmoid => "sigmoid",
            Smooth::Softplus => "softplus",
        }
    }

    pub fn parse(name: &str) -> Result<Smooth> {
        match name.to_ascii_lowercase().as_str() {
            "tanh" => Ok(Smooth::Tanh),
            "sigmoid" => Ok(Smooth::Sigmoid),
            "softplus" => Ok(Smooth::Softplus),
            other => Err(Error::Config(format!(
                "unknown sigma `{other}` (expected tanh, sigmoid or softplus)"
            ))),
        }
    }

    pub(crate) fn on_tape(self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self {
            Smooth::Tanh => tape.tanh(x),
            Smooth::Sigmoid => tape.sigmoid(x),
            Smooth::Softplus => tape.softplus(x),
        }
    }

    pub fn apply(self, x: &Matrix) -> Matrix {
        match self {
            Smooth::Tanh => tensor::ops::tanh(x),
            Smooth::Sigmoid => tensor::ops::sigmoid(x),
            Smooth::Softplus => tensor::ops::softplus(x),
        }
    }
}

/// Structural options: group count, σ, and the two ablation switches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OgabOptions {
    pub groups: usize,
    #[serde(default)]
    pub sigma: Smooth,
    #[serde(default = "yes")]
    pub orthogonal: bool,
    #[serde(default = "yes")]
    pub group_bias: bool,
}

fn yes() -> bool {
    true
}

pub const DEFAULT_GROUPS: usize = 5;

impl Default for OgabOptions {
    fn default() -> Self {
        OgabOptions {
            groups: DEFAULT_GROUPS,
            sigma: Smooth::Tanh,
            orthogonal: true,
            group_bias: true,
        }
    }
}

impl OgabOptions {
    pub fn with_groups(groups: usize) -> Self {
        OgabOptions {
            groups,
            ..Self::default()
        }
    }

    pub fn without_orthogonality(self) -> Self {
        OgabOptions {
            orthogonal: false,
            ..self
        }
    }

    pub fn without_group_bias(self) -> Self {
        OgabOptions {
            group_bias: false,
            ..self
        }
    }

    /// Learnable scalars for a layer of width `dim`.
    pub fn param_count(&self, dim: usize) -> usize {
        let g = self.groups;
        let mut n = dim; // s
        if self.orthogonal {
            n += dim * dim;
        }
        if self.group_bias {
            n += g * dim + dim * g + g;
        }
        n
    }
}

/// Gate and per-group bias parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupGate {
    /// `F`, one bias row per group (G×d).
    pub group_biases: Matrix,
    /// `M` (d×G).
    pub gate_weights: Matrix,
    /// `B` (1×G).
    pub gate_bias: Matrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OgabLayer {
    dim: usize,
    groups: usize,
    sigma: Smooth,
    /// `A` (d×d); absent when the orthogonal map is ablated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    skew_source: Option<Matrix>,
    /// `s` (1×d).
    scale: Matrix,
    /// Absent when the group-aware bias is ablated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gate: Option<GroupGate>,
}

/// How a layer's parameters enter a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binding {
    /// As trainable leaves that receive gradients.
    Trainable,
    /// As constants; used for inference.
    Frozen,
}

impl Binding {
    pub(crate) fn leaf(self, tape: &mut Tape, m: &Matrix) -> Var {
        match self {
            Binding::Trainable => tape.param(m.clone()),
            Binding::Frozen => tape.constant(m.clone()),
        }
    }
}

/// `S = A − Aᵀ`
pub fn skew(a: &Matrix) -> Result<Matrix> {
    if a.rows() != a.cols() {
        return Err(Error::shape("skew", a.shape(), a.shape()));
    }
    a.sub(&a.transpose())
}

/// `Q = (I + S)(I − S)⁻¹`, computed as the solution of `(I − S)·Q = I + S`.
pub fn cayley(s: &Matrix) -> Result<Matrix> {
    let n = s.rows();
    if s.cols() != n {
        return Err(Error::shape("cayley", s.shape(), s.shape()));
    }
    let asym = s.add(&s.transpose())?.max_abs();
    if !(asym < SKEW_TOLERANCE) {
        return Err(Error::Contract(format!(
            "cayley needs a skew-symmetric input; ‖S + Sᵀ‖_max = {asym:.3e}"
        )));
    }
    let eye = Matrix::identity(n);
    let plus = eye.add(s)?;
    let minus = eye.sub(s)?;
    tensor::solve(&minus, &plus).map_err(|e| match e {
        // (I − S) has eigenvalues 1 − iλ, so reaching this is a numeric bug
        Error::Singular { column, pivot } => Error::Contract(format!(
            "I − S reported singular at column {column} (pivot {pivot:.3e})"
        )),
        other => other,
    })
}

/// `U = X Qᵀ`
pub fn orthogonal_map(x: &Matrix, q: &Matrix) -> Result<Matrix> {
    if q.rows() != q.cols() || x.cols() != q.rows() {
        return Err(Error::shape("orthogonal_map", x.shape(), q.shape()));
    }
    x.matmul_nt(q)
}

/// `‖QᵀQ − I‖_max` and `‖QQᵀ − I‖_max`.
pub fn orthogonality_error(q: &Matrix) -> Result<(f64, f64)> {
    let eye = Matrix::identity(q.rows());
    let left = q.matmul_tn(q)?.max_abs_diff(&eye)?;
    let right = q.matmul_nt(q)?.max_abs_diff(&eye)?;
    Ok((left, right))
}

impl OgabLayer {
    /// Seeded initialization: `A ~ U(±0.01)`, `s = 1`, `F = 0`,
    /// `M ~ U(±√(6/(d+G)))`, `B = 0`.
    ///
    /// All draws happen regardless of the ablation switches, so ablated
    /// layers share the surviving parameters with the full layer.
    pub fn init(dim: usize, options: &OgabOptions, seed: u64) -> Result<OgabLayer> {
        if dim == 0 || options.groups == 0 {
            return Err(Error::Config(format!(
                "OGAB needs d >= 1 and G >= 1 (got d={dim}, G={})",
                options.groups
            )));
        }
        let g = options.groups;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Matrix::from_fn(dim, dim, |_, _| {
            rng.random_range(-SKEW_SOURCE_INIT..SKEW_SOURCE_INIT)
        });
        let limit = (6.0 / (dim + g) as f64).sqrt();
        let m = Matrix::from_fn(dim, g, |_, _| rng.random_range(-limit..limit));
        Ok(OgabLayer {
            dim,
            groups: g,
            sigma: options.sigma,
            skew_source: options.orthogonal.then_some(a),
            scale: Matrix::filled(1, dim, 1.0),
            gate: options.group_bias.then(|| GroupGate {
                group_biases: Matrix::zeros(g, dim),
                gate_weights: m,
                gate_bias: Matrix::zeros(1, g),
            }),
        })
    }

    /// Builds a layer from explicit parameters. `skew_source` and `gate`
    /// double as the ablation switches.
    pub fn from_parts(
        sigma: Smooth,
        skew_source: Option<Matrix>,
        scale: Matrix,
        gate: Option<GroupGate>,
    ) -> Result<OgabLayer> {
        let dim = scale.cols();
        if scale.rows() != 1 || dim == 0 {
            return Err(Error::Config(format!("scale must be 1×d, got {:?}", scale.shape())));
        }
        if let Some(a) = &skew_source {
            if a.shape() != (dim, dim) {
                return Err(Error::shape("ogab A", a.shape(), (dim, dim)));
            }
        }
        let groups = match &gate {
            Some(gate) => {
                let g = gate.group_biases.rows();
                if g == 0
                    || gate.group_biases.shape() != (g, dim)
                    || gate.gate_weights.shape() != (dim, g)
                    || gate.gate_bias.shape() != (1, g)
                {
                    return Err(Error::Config(format!(
                        "inconsistent gate shapes: F {:?}, M {:?}, B {:?} for d={dim}",
                        gate.group_biases.shape(),
                        gate.gate_weights.shape(),
                        gate.gate_bias.shape()
                    )));
                }
                g
            }
            None => 1,
        };
        Ok(OgabLayer {
            dim,
            groups,
            sigma,
            skew_source,
            scale,
            gate,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn sigma(&self) -> Smooth {
        self.sigma
    }

    pub fn use_orthogonal(&self) -> bool {
        self.skew_source.is_some()
    }

    pub fn use_group_bias(&self) -> bool {
        self.gate.is_some()
    }

    pub fn options(&self) -> OgabOptions {
        OgabOptions {
            groups: self.groups,
            sigma: self.sigma,
            orthogonal: self.use_orthogonal(),
            group_bias: self.use_group_bias(),
        }
    }

    pub fn skew_source(&self) -> Option<&Matrix> {
        self.skew_source.as_ref()
    }

    pub fn scale(&self) -> &Matrix {
        &self.scale
    }

    pub fn gate(&self) -> Option<&GroupGate> {
        self.gate.as_ref()
    }

    /// The current orthogonal matrix, or `None` when ablated.
    pub fn rotation(&self) -> Result<Option<Matrix>> {
        self.skew_source
            .as_ref()
            .map(|a| cayley(&skew(a)?))
            .transpose()
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.dim {
            return Err(Error::shape("ogab input", x.shape(), (x.rows(), self.dim)));
        }
        Ok(())
    }

    fn require_gate(&self) -> Result<&GroupGate> {
        self.gate
            .as_ref()
            .ok_or_else(|| Error::Contract("group-aware bias is disabled on this layer".into()))
    }

    /// Row `i` is `softmax(Mᵀ xᵢ + B)` over the G groups.
    pub fn gate_probs(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let gate = self.require_gate()?;
        let logits = x.matmul(&gate.gate_weights)?.add_row(&gate.gate_bias)?;
        tensor::softmax_rows(&logits)
    }

    /// `Vᵢ = Σ_g P[i,g]·F_g`, i.e. `V = P·F`.
    pub fn group_bias(&self, p: &Matrix) -> Result<Matrix> {
        let gate = self.require_gate()?;
        if p.cols() != self.groups {
            return Err(Error::shape("group_bias", p.shape(), gate.group_biases.shape()));
        }
        p.matmul(&gate.group_biases)
    }

    /// Parameters in tape-registration order: `A`, `s`, `F`, `M`, `B`
    /// (skipping ablated ones).
    pub fn params(&self) -> Vec<&Matrix> {
        let mut out = Vec::with_capacity(5);
        out.extend(self.skew_source.as_ref());
        out.push(&self.scale);
        if let Some(g) = &self.gate {
            out.extend([&g.group_biases, &g.gate_weights, &g.gate_bias]);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::with_capacity(5);
        out.extend(self.skew_source.as_mut());
        out.push(&mut self.scale);
        if let Some(g) = &mut self.gate {
            out.extend([&mut g.group_biases, &mut g.gate_weights, &mut g.gate_bias]);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|m| m.len()).sum()
    }

    /// Records the forward pass on `tape`, returning the output and the
    /// parameter leaves in [`OgabLayer::params`] order.
    pub fn forward_on(&self, tape: &mut Tape, x: Var, binding: Binding) -> Result<(Var, Vec<Var>)> {
        let (n, d) = tape.shape(x);
        if d != self.dim {
            return Err(Error::shape("ogab input", (n, d), (n, self.dim)));
        }
        let leaves: Vec<Var> = self.params().into_iter().map(|m| binding.leaf(tape, m)).collect();
        let mut next = leaves.iter().copied();

        let u = match self.skew_source {
            Some(_) => {
                let a = next.next().expect("A leaf");
                let at = tape.transpose(a)?;
                let s = tape.sub(a, at)?;
                let eye = tape.constant(Matrix::identity(self.dim));
                let plus = tape.add(eye, s)?;
                let minus = tape.sub(eye, s)?;
                let q = tape.solve(minus, plus)?;
                tape.matmul_nt(x, q)?
            }
            None => x,
        };
        let scale = next.next().expect("s leaf");
        let w = match self.gate {
            Some(_) => {
                let f = next.next().expect("F leaf");
                let m = next.next().expect("M leaf");
                let b = next.next().expect("B leaf");
                let xm = tape.matmul(x, m)?;
                let logits = tape.add_row(xm, b)?;
                let p = tape.softmax_rows(logits)?;
                let v = tape.matmul(p, f)?;
                tape.add(u, v)?
            }
            None => u,
        };
        let act = self.sigma.on_tape(tape, w)?;
        let y = tape.scale_rows(act, scale)?;
        Ok((y, leaves))
    }

    /// `Y = s ⊙ σ(X Qᵀ + P F)`.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let (y, _) = self.forward_on(&mut tape, xv, Binding::Frozen)?;
        Ok(tape.value(y).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    fn layer_with(a: Option<Matrix>, s: Matrix, gate: Option<GroupGate>) -> OgabLayer {
        OgabLayer::from_parts(Smooth::Tanh, a, s, gate).unwrap()
    }

    #[test]
    fn skew_examples() {
        assert_eq!(skew(&Matrix::zeros(3, 3)).unwrap(), Matrix::zeros(3, 3));
        let sym = m(&[&[1.0, 2.0], &[2.0, 5.0]]);
        assert_eq!(skew(&sym).unwrap(), Matrix::zeros(2, 2));
        assert_eq!(
            skew(&m(&[&[0.0, 1.0], &[0.0, 0.0]])).unwrap(),
            m(&[&[0.0, 1.0], &[-1.0, 0.0]])
        );
        assert!(matches!(skew(&Matrix::zeros(2, 3)), Err(Error::Shape { .. })));
    }

    #[test]
    fn skew_is_exactly_antisymmetric() {
        let a = Matrix::from_fn(5, 5, |i, j| (i as f64 * 0.37 - j as f64 * 1.91).sin());
        let s = skew(&a).unwrap();
        assert_eq!(s.transpose(), s.scale(-1.0));
    }

    #[test]
    fn cayley_examples() {
        assert_eq!(cayley(&Matrix::zeros(4, 4)).unwrap(), Matrix::identity(4));
        let s = m(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        let q = cayley(&s).unwrap();
        assert!(q.max_abs_diff(&s).unwrap() < 1e-15);
    }

    #[test]
    fn cayley_rejects_non_skew() {
        let err = cayley(&m(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn orthogonal_map_examples() {
        let x = Matrix::from_fn(3, 2, |i, j| (i + 2 * j) as f64);
        assert_eq!(orthogonal_map(&x, &Matrix::identity(2)).unwrap(), x);
        let u = orthogonal_map(&m(&[&[1.0, 0.0]]), &m(&[&[0.0, 1.0], &[-1.0, 0.0]])).unwrap();
        assert_eq!(u.as_slice(), &[0.0, -1.0]);
        assert!(orthogonal_map(&x, &Matrix::identity(3)).is_err());
    }

    #[test]
    fn gate_probability_examples() {
        let x = Matrix::from_fn(3, 2, |i, j| i as f64 - j as f64);
        let single = layer_with(
            None,
            Matrix::filled(1, 2, 1.0),
            Some(GroupGate {
                group_biases: Matrix::zeros(1, 2),
                gate_weights: Matrix::filled(2, 1, 0.7),
                gate_bias: Matrix::filled(1, 1, -3.0),
            }),
        );
        assert_eq!(single.gate_probs(&x).unwrap(), Matrix::filled(3, 1, 1.0));

        let uniform = layer_with(
            None,
            Matrix::filled(1, 2, 1.0),
            Some(GroupGate {
                group_biases: Matrix::zeros(4, 2),
                gate_weights: Matrix::zeros(2, 4),
                gate_bias: Matrix::zeros(1, 4),
            }),
        );
        assert_eq!(uniform.gate_probs(&x).unwrap(), Matrix::filled(3, 4, 0.25));

        let scalar = layer_with(
            None,
            Matrix::filled(1, 1, 1.0),
            Some(GroupGate {
                group_biases: Matrix::zeros(2, 1),
                gate_weights: m(&[&[1.0, 0.0]]),
                gate_bias: Matrix::zeros(1, 2),
            }),
        );
        let p = scalar.gate_probs(&m(&[&[3f64.ln()]])).unwrap();
        assert!((p[(0, 0)] - 0.75).abs() < 1e-15 && (p[(0, 1)] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn group_bias_examples() {
        let gate = |f: Matrix| GroupGate {
            gate_weights: Matrix::zeros(2, f.rows()),
            gate_bias: Matrix::zeros(1, f.rows()),
            group_biases: f,
        };
        let one = layer_with(None, Matrix::filled(1, 2, 1.0), Some(gate(m(&[&[0.3, -2.0]]))));
        let v = one.group_bias(&Matrix::filled(4, 1, 1.0)).unwrap();
        for row in v.row_iter() {
            assert_eq!(row, &[0.3, -2.0]);
        }
        let zero = layer_with(None, Matrix::filled(1, 2, 1.0), Some(gate(Matrix::zeros(3, 2))));
        assert_eq!(
            zero.group_bias(&Matrix::filled(2, 3, 1.0 / 3.0)).unwrap(),
            Matrix::zeros(2, 2)
        );
        let two = layer_with(None, Matrix::filled(1, 2, 1.0), Some(gate(Matrix::identity(2))));
        let v = two.group_bias(&m(&[&[0.25, 0.75]])).unwrap();
        assert_eq!(v.as_slice(), &[0.25, 0.75]);
    }

    #[test]
    fn group_bias_matches_expanded_tensor_sum() {
        // E[i,g,:] = F_g, weighted by p(i,g) and summed over g
        let f = Matrix::from_fn(3, 4, |g, j| (g as f64 + 1.0) * (j as f64 - 1.5));
        let p = tensor::softmax_rows(&Matrix::from_fn(5, 3, |i, g| (i * g) as f64 * 0.3)).unwrap();
        let layer = layer_with(
            None,
            Matrix::filled(1, 4, 1.0),
            Some(GroupGate {
                group_biases: f.clone(),
                gate_weights: Matrix::zeros(4, 3),
                gate_bias: Matrix::zeros(1, 3),
            }),
        );
        let v = layer.group_bias(&p).unwrap();
        for i in 0..5 {
            for j in 0..4 {
                let expanded: f64 = (0..3).map(|g| p[(i, g)] * f[(g, j)]).sum();
                assert!((v[(i, j)] - expanded).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn degenerate_layer_is_plain_tanh() {
        let layer = layer_with(
            Some(Matrix::zeros(3, 3)),
            Matrix::filled(1, 3, 1.0),
            Some(GroupGate {
                group_biases: Matrix::zeros(2, 3),
                gate_weights: Matrix::zeros(3, 2),
                gate_bias: Matrix::zeros(1, 2),
            }),
        );
        let x = Matrix::from_fn(4, 3, |i, j| (i as f64 - j as f64) * 0.4);
        assert_eq!(layer.forward(&x).unwrap(), tensor::ops::tanh(&x));

        let bare = layer_with(None, Matrix::filled(1, 3, 1.0), None);
        assert_eq!(bare.forward(&x).unwrap(), tensor::ops::tanh(&x));
    }

    #[test]
    fn init_is_deterministic_and_near_identity() {
        let opts = OgabOptions::default();
        let a = OgabLayer::init(6, &opts, 11).unwrap();
        let b = OgabLayer::init(6, &opts, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, OgabLayer::init(6, &opts, 12).unwrap());

        let q = a.rotation().unwrap().unwrap();
        let (l, r) = orthogonality_error(&q).unwrap();
        assert!(l < 1e-9 && r < 1e-9);

        let x = Matrix::from_fn(10, 6, |i, j| ((i * 7 + j * 3) % 11) as f64 / 5.5 - 1.0);
        let dev = a.forward(&x).unwrap().max_abs_diff(&tensor::ops::tanh(&x)).unwrap();
        assert!(dev < 0.05, "deviation {dev}");
    }

    #[test]
    fn init_rejects_empty_dims() {
        assert!(OgabLayer::init(0, &OgabOptions::default(), 0).is_err());
        assert!(OgabLayer::init(3, &OgabOptions::with_groups(0), 0).is_err());
    }

    #[test]
    fn ablated_layers_drop_parameters() {
        let full = OgabOptions::with_groups(5);
        assert_eq!(full.param_count(64), 64 * 64 + 64 + 5 * 64 + 64 * 5 + 5);
        let no_orth = OgabLayer::init(8, &full.without_orthogonality(), 1).unwrap();
        assert!(no_orth.skew_source().is_none());
        assert_eq!(no_orth.param_count(), full.without_orthogonality().param_count(8));
        let no_bias = OgabLayer::init(8, &full.without_group_bias(), 1).unwrap();
        assert!(no_bias.gate_probs(&Matrix::zeros(1, 8)).is_err());
        assert_eq!(no_bias.param_count(), 8 * 8 + 8);
    }
}
