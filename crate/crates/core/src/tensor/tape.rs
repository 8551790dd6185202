//! Reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Tape`] records every operation of one forward pass as a node whose
//! parents always have smaller ids. [`Tape::backward`] then walks the ids
//! in decreasing order, so each node's gradient is complete before it is
//! pushed to its parents. Tapes are built per training step and dropped
//! afterwards.

use crate::error::{Error, Result};
use crate::tensor::lu::Lu;
use crate::tensor::{ops, Matrix};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Param,
    Constant,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Transpose(Var),
    AddRow(Var, Var),
    ScaleRows(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Softplus(Var),
    Prelu(Var, Var),
    Softmax(Var),
    Solve { a: Var, b: Var, lu: Lu },
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Matrix },
    Sum(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Param => "param",
            Op::Constant => "constant",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::MatMul(..) => "matmul",
            Op::MatMulNt(..) => "matmul_nt",
            Op::Transpose(..) => "transpose",
            Op::AddRow(..) => "add_row",
            Op::ScaleRows(..) => "scale_rows",
            Op::Tanh(..) => "tanh",
            Op::Sigmoid(..) => "sigmoid",
            Op::Relu(..) => "relu",
            Op::Softplus(..) => "softplus",
            Op::Prelu(..) => "prelu",
            Op::Softmax(..) => "softmax",
            Op::Solve { .. } => "solve",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::Sum(..) => "sum",
        }
    }

    fn parents(&self) -> Vec<Var> {
        match *self {
            Op::Param | Op::Constant => vec![],
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::MatMul(a, b)
            | Op::MatMulNt(a, b)
            | Op::AddRow(a, b)
            | Op::ScaleRows(a, b)
            | Op::Prelu(a, b)
            | Op::Solve { a, b, .. } => vec![a, b],
            Op::Transpose(a)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Relu(a)
            | Op::Softplus(a)
            | Op::Softmax(a)
            | Op::Sum(a) => vec![a],
            Op::CrossEntropy { logits, .. } => vec![logits],
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Matrix,
    grad: Option<Matrix>,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<Var>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A trainable leaf; it receives a gradient on every backward pass.
    pub fn param(&mut self, value: Matrix) -> Var {
        let v = self.push_unchecked(Op::Param, value, true);
        self.params.push(v);
        v
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push_unchecked(Op::Constant, value, false)
    }

    pub fn params(&self) -> &[Var] {
        &self.params
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        let m = self.value(v);
        if m.shape() != (1, 1) {
            return Err(Error::Contract(format!("node {} is not scalar: {:?}", v.0, m.shape())));
        }
        Ok(m[(0, 0)])
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }

    pub fn parents(&self, v: Var) -> Vec<Var> {
        self.nodes[v.0].op.parents()
    }

    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn push_unchecked(&mut self, op: Op, value: Matrix, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            grad: None,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op, value: Matrix) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(op.name()));
        }
        let requires_grad = op.parents().iter().any(|p| self.nodes[p.0].requires_grad);
        Ok(self.push_unchecked(op, value, requires_grad))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b))?;
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).mul(self.value(b))?;
        self.push(Op::Mul(a, b), v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        self.push(Op::MatMul(a, b), v)
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul_nt(self.value(b))?;
        self.push(Op::MatMulNt(a, b), v)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).transpose();
        self.push(Op::Transpose(a), v)
    }

    /// Adds the 1×cols vector `row` to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let v = self.value(x).add_row(self.value(row))?;
        self.push(Op::AddRow(x, row), v)
    }

    /// Multiplies every row of `x` entrywise by the 1×cols vector `s`.
    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var> {
        let v = self.value(x).scale_rows_by_vector(self.value(s))?;
        self.push(Op::ScaleRows(x, s), v)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let v = ops::tanh(self.value(x));
        self.push(Op::Tanh(x), v)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let v = ops::sigmoid(self.value(x));
        self.push(Op::Sigmoid(x), v)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let v = ops::relu(self.value(x));
        self.push(Op::Relu(x), v)
    }

    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        let v = ops::softplus(self.value(x));
        self.push(Op::Softplus(x), v)
    }

    pub fn prelu(&mut self, x: Var, alpha: Var) -> Result<Var> {
        let v = ops::prelu(self.value(x), self.value(alpha))?;
        self.push(Op::Prelu(x, alpha), v)
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let v = ops::softmax_rows(self.value(x))?;
        self.push(Op::Softmax(x), v)
    }

    /// `X` with `a·X = b`, via LU with partial pivoting.
    pub fn solve(&mut self, a: Var, b: Var) -> Result<Var> {
        let (am, bm) = (self.value(a), self.value(b));
        if am.rows() != am.cols() || am.rows() != bm.rows() {
            return Err(Error::shape("solve", am.shape(), bm.shape()));
        }
        let lu = Lu::factor(am)?;
        let v = lu.solve(bm)?;
        self.push(Op::Solve { a, b, lu }, v)
    }

    /// Mean cross-entropy of integer `labels` under `softmax(logits)`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        let loss = ops::cross_entropy_from_logits(lv, labels)?;
        let probs = ops::softmax_rows(lv)?;
        let v = Matrix::filled(1, 1, loss);
        self.push(
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            v,
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let v = Matrix::filled(1, 1, self.value(x).sum());
        self.push(Op::Sum(x), v)
    }

    /// Accumulates `d root / d node` into every node that depends on a
    /// parameter. `root` must be 1×1.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.shape(root) != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar root, got {:?}",
                self.shape(root)
            )));
        }
        accumulate(&mut self.nodes[root.0].grad, Matrix::filled(1, 1, 1.0));

        for id in (0..=root.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[id].grad.take() else {
                continue;
            };
            let contributions = self.local_grads(id, &g)?;
            self.nodes[id].grad = Some(g);
            for (parent, pg) in contributions {
                debug_assert!(parent.0 < id);
                debug_assert_eq!(pg.shape(), self.nodes[parent.0].value.shape());
                accumulate(&mut self.nodes[parent.0].grad, pg);
            }
        }

        for &p in &self.params {
            let node = &mut self.nodes[p.0];
            if node.grad.is_none() {
                node.grad = Some(Matrix::zeros(node.value.rows(), node.value.cols()));
            }
        }
        Ok(())
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn local_grads(&self, id: usize, g: &Matrix) -> Result<Vec<(Var, Matrix)>> {
        let node = &self.nodes[id];
        let y = &node.value;
        let mut out = Vec::with_capacity(2);
        match &node.op {
            Op::Param | Op::Constant => {}
            &Op::Add(a, b) => {
                if self.needs(a) {
                    out.push((a, g.clone()));
                }
                if self.needs(b) {
                    out.push((b, g.clone()));
                }
            }
            &Op::Sub(a, b) => {
                if self.needs(a) {
                    out.push((a, g.clone()));
                }
                if self.needs(b) {
                    out.push((b, g.scale(-1.0)));
                }
            }
            &Op::Mul(a, b) => {
                if self.needs(a) {
                    out.push((a, g.mul(self.value(b))?));
                }
                if self.needs(b) {
                    out.push((b, g.mul(self.value(a))?));
                }
            }
            &Op::MatMul(a, b) => {
                if self.needs(a) {
                    out.push((a, g.matmul_nt(self.value(b))?));
                }
                if self.needs(b) {
                    out.push((b, self.value(a).matmul_tn(g)?));
                }
            }
            &Op::MatMulNt(a, b) => {
                if self.needs(a) {
                    out.push((a, g.matmul(self.value(b))?));
                }
                if self.needs(b) {
                    out.push((b, g.matmul_tn(self.value(a))?));
                }
            }
            &Op::Transpose(a) => out.push((a, g.transpose())),
            &Op::AddRow(x, row) => {
                if self.needs(x) {
                    out.push((x, g.clone()));
                }
                if self.needs(row) {
                    out.push((row, g.column_sums()));
                }
            }
            &Op::ScaleRows(x, s) => {
                if self.needs(x) {
                    out.push((x, g.scale_rows_by_vector(self.value(s))?));
                }
                if self.needs(s) {
                    out.push((s, g.mul(self.value(x))?.column_sums()));
                }
            }
            &Op::Tanh(x) => out.push((x, zip(g, y, |g, y| g * (1.0 - y * y)))),
            &Op::Sigmoid(x) => out.push((x, zip(g, y, |g, y| g * y * (1.0 - y)))),
            &Op::Relu(x) => {
                out.push((x, zip(g, self.value(x), |g, x| if x > 0.0 { g } else { 0.0 })))
            }
            &Op::Softplus(x) => {
                out.push((x, zip(g, self.value(x), |g, x| g * ops::sigmoid_scalar(x))))
            }
            &Op::Prelu(x, alpha) => {
                let xv = self.value(x);
                let av = self.value(alpha).as_slice();
                let cols = xv.cols();
                if self.needs(x) {
                    let mut gx = g.clone();
                    for (k, (gv, &xk)) in gx.as_mut_slice().iter_mut().zip(xv.as_slice()).enumerate() {
                        if xk <= 0.0 {
                            *gv *= av[k % cols];
                        }
                    }
                    out.push((x, gx));
                }
                if self.needs(alpha) {
                    let neg = zip(g, xv, |g, x| if x <= 0.0 { g * x } else { 0.0 });
                    out.push((alpha, neg.column_sums()));
                }
            }
            &Op::Softmax(x) => {
                let cols = y.cols().max(1);
                let mut gx = g.clone();
                for (grow, yrow) in gx.as_mut_slice().chunks_mut(cols).zip(y.as_slice().chunks(cols)) {
                    let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                    for (gv, &yv) in grow.iter_mut().zip(yrow) {
                        *gv = yv * (*gv - dot);
                    }
                }
                out.push((x, gx));
            }
            Op::Solve { a, b, lu } => {
                let gb = lu.solve_transpose(g)?;
                if self.needs(*a) {
                    out.push((*a, gb.matmul_nt(y)?.scale(-1.0)));
                }
                if self.needs(*b) {
                    out.push((*b, gb));
                }
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let k = g[(0, 0)] / labels.len() as f64;
                let mut gl = probs.clone();
                for (i, &label) in labels.iter().enumerate() {
                    gl[(i, label)] -= 1.0;
                }
                out.push((*logits, gl.scale(k)));
            }
            &Op::Sum(x) => {
                let (r, c) = self.shape(x);
                out.push((x, Matrix::filled(r, c, g[(0, 0)])));
            }
        }
        Ok(out)
    }
}

fn accumulate(slot: &mut Option<Matrix>, g: Matrix) {
    match slot {
        Some(existing) => existing.add_assign(&g),
        None => *slot = Some(g),
    }
}

fn zip(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    a.zip_map(b, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_function_has_unit_gradient() {
        let mut t = Tape::new();
        let x = t.param(Matrix::filled(1, 1, 2.5));
        t.backward(x).unwrap();
        assert_eq!(t.grad(x).unwrap().as_slice(), &[1.0]);
    }

    #[test]
    fn disconnected_leaf_gets_zero_gradient() {
        let mut t = Tape::new();
        let x = t.param(Matrix::filled(2, 2, 1.0));
        let unused = t.param(Matrix::filled(3, 1, 1.0));
        let s = t.sum(x).unwrap();
        t.backward(s).unwrap();
        assert_eq!(t.grad(unused).unwrap(), &Matrix::zeros(3, 1));
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let mut t = Tape::new();
        let x = t.param(Matrix::zeros(2, 2));
        assert!(matches!(t.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn add_passes_gradient_through() {
        let mut t = Tape::new();
        let a = t.param(Matrix::filled(2, 3, 1.0));
        let b = t.param(Matrix::filled(2, 3, -4.0));
        let c = t.add(a, b).unwrap();
        let s = t.sum(c).unwrap();
        t.backward(s).unwrap();
        assert_eq!(t.grad(a).unwrap(), &Matrix::filled(2, 3, 1.0));
        assert_eq!(t.grad(b).unwrap(), &Matrix::filled(2, 3, 1.0));
    }

    #[test]
    fn matmul_gradient_of_sum() {
        let mut t = Tape::new();
        let a = t.param(Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap());
        let b = t.constant(Matrix::filled(2, 2, 1.0));
        let c = t.matmul(a, b).unwrap();
        let s = t.sum(c).unwrap();
        t.backward(s).unwrap();
        assert_eq!(t.grad(a).unwrap(), &Matrix::filled(2, 2, 2.0));
        assert!(t.grad(b).is_none());
    }

    #[test]
    fn cross_entropy_gradient_at_uniform_logits() {
        let mut t = Tape::new();
        let z = t.param(Matrix::zeros(1, 2));
        let l = t.cross_entropy(z, &[0]).unwrap();
        t.backward(l).unwrap();
        assert_eq!(t.grad(z).unwrap().as_slice(), &[-0.5, 0.5]);
    }

    #[test]
    fn parents_precede_children() {
        let mut t = Tape::new();
        let a = t.param(Matrix::identity(3));
        let b = t.transpose(a).unwrap();
        let c = t.sub(a, b).unwrap();
        for v in [b, c] {
            assert!(t.parents(v).iter().all(|p| p.id() < v.id()));
        }
        assert_eq!(t.op_name(c), "sub");
    }
}
