//! Central finite differences against the tape's reverse-mode gradients.

use ogab::activation::{ActivationKind, Binding, OgabLayer, OgabOptions, Smooth};
use ogab::model::{MlpConfig, MlpModel};
use ogab::tensor::ops::cross_entropy_from_logits;
use ogab::{Matrix, Result, Tape, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(-scale..scale))
}

/// Builds `f(inputs)` on a fresh tape, reduces it to a scalar by a fixed
/// random weighting, and compares every input gradient with finite
/// differences. Returns the worst relative error.
fn check<F>(inputs: &[Matrix], f: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let probe_shape = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|m| tape.param(m.clone())).collect();
        let out = f(&mut tape, &vars).unwrap();
        tape.shape(out)
    };
    let weights = random(&mut rng, probe_shape.0, probe_shape.1, 1.0);
    let eval = |ms: &[Matrix], grads: bool| -> (f64, Vec<Matrix>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ms.iter().map(|m| tape.param(m.clone())).collect();
        let out = f(&mut tape, &vars).unwrap();
        let w = tape.constant(weights.clone());
        let prod = tape.mul(out, w).unwrap();
        let loss = tape.sum(prod).unwrap();
        let value = tape.scalar(loss).unwrap();
        if !grads {
            return (value, vec![]);
        }
        tape.backward(loss).unwrap();
        (value, vars.iter().map(|&v| tape.grad(v).unwrap().clone()).collect())
    };
    let (_, analytic) = eval(inputs, true);
    let mut worst: f64 = 0.0;
    for (k, m) in inputs.iter().enumerate() {
        for idx in 0..m.len() {
            let mut plus = inputs.to_vec();
            plus[k].as_mut_slice()[idx] += H;
            let mut minus = inputs.to_vec();
            minus[k].as_mut_slice()[idx] -= H;
            let numeric = (eval(&plus, false).0 - eval(&minus, false).0) / (2.0 * H);
            worst = worst.max(rel_err(analytic[k].as_slice()[idx], numeric));
        }
    }
    worst
}

macro_rules! op_check {
    ($name:ident, [$(($r:expr, $c:expr)),*], |$t:ident, $v:ident| $body:expr) => {
        #[test]
        fn $name() {
            let mut rng = ChaCha8Rng::seed_from_u64(stringify!($name).len() as u64);
            let inputs = vec![$(random(&mut rng, $r, $c, 1.0)),*];
            let worst = check(&inputs, |$t, $v| $body);
            assert!(worst < TOL, "worst relative error {worst:e}");
        }
    };
}

op_check!(add, [(3, 4), (3, 4)], |t, v| t.add(v[0], v[1]));
op_check!(sub, [(3, 4), (3, 4)], |t, v| t.sub(v[0], v[1]));
op_check!(mul, [(3, 4), (3, 4)], |t, v| t.mul(v[0], v[1]));
op_check!(matmul, [(3, 4), (4, 2)], |t, v| t.matmul(v[0], v[1]));
op_check!(matmul_nt, [(3, 4), (5, 4)], |t, v| t.matmul_nt(v[0], v[1]));
op_check!(transpose, [(3, 4)], |t, v| t.transpose(v[0]));
op_check!(add_row, [(3, 4), (1, 4)], |t, v| t.add_row(v[0], v[1]));
op_check!(scale_rows, [(3, 4), (1, 4)], |t, v| t.scale_rows(v[0], v[1]));
op_check!(tanh, [(3, 4)], |t, v| t.tanh(v[0]));
op_check!(sigmoid, [(3, 4)], |t, v| t.sigmoid(v[0]));
op_check!(softplus, [(3, 4)], |t, v| t.softplus(v[0]));
op_check!(softmax_rows, [(3, 4)], |t, v| t.softmax_rows(v[0]));
op_check!(prelu, [(3, 4), (1, 4)], |t, v| t.prelu(v[0], v[1]));
op_check!(sum, [(3, 4)], |t, v| t.sum(v[0]));
op_check!(cross_entropy, [(4, 3)], |t, v| t.cross_entropy(v[0], &[0, 2, 1, 2]));

#[test]
fn relu_away_from_the_kink() {
    let x = Matrix::from_rows(&[[0.5, -0.7, 1.2], [-0.3, 0.9, -1.1]]).unwrap();
    assert!(check(&[x], |t, v| t.relu(v[0])) < TOL);
}

#[test]
fn solve_through_both_operands() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // diagonally dominant so the system is well conditioned
    let a = random(&mut rng, 4, 4, 0.3).add(&Matrix::identity(4).scale(2.0)).unwrap();
    let b = random(&mut rng, 4, 3, 1.0);
    assert!(check(&[a, b], |t, v| t.solve(v[0], v[1])) < TOL);
}

#[test]
fn cayley_rotation_of_a_skew_matrix() {
    // Q = solve(I - S, I + S) with S = A - Aᵀ, differentiated w.r.t. A
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = random(&mut rng, 4, 4, 1.0);
    let worst = check(&[a], |t, v| {
        let at = t.transpose(v[0])?;
        let s = t.sub(v[0], at)?;
        let i = t.constant(Matrix::identity(4));
        let lhs = t.sub(i, s)?;
        let rhs = t.add(i, s)?;
        t.solve(lhs, rhs)
    });
    assert!(worst < TOL, "{worst:e}");
}

/// Loss of `model` on `(x, y)` evaluated without a tape.
fn model_loss(model: &MlpModel, x: &Matrix, y: &[usize]) -> f64 {
    cross_entropy_from_logits(&model.forward(x).unwrap(), y).unwrap()
}

/// Every scalar of every parameter of `model` against finite differences
/// of the mean cross-entropy.
fn check_model(model: &MlpModel, x: &Matrix, y: &[usize]) -> f64 {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let (logits, leaves) = model.forward_on(&mut tape, xv, Binding::Trainable).unwrap();
    let loss = tape.cross_entropy(logits, y).unwrap();
    tape.backward(loss).unwrap();
    let analytic: Vec<Matrix> = leaves.iter().map(|&v| tape.grad(v).unwrap().clone()).collect();
    assert_eq!(analytic.len(), model.params().len());

    let mut worst: f64 = 0.0;
    for (k, grad) in analytic.iter().enumerate() {
        for idx in 0..grad.len() {
            let mut plus = model.clone();
            plus.params_mut()[k].as_mut_slice()[idx] += H;
            let mut minus = model.clone();
            minus.params_mut()[k].as_mut_slice()[idx] -= H;
            let numeric = (model_loss(&plus, x, y) - model_loss(&minus, x, y)) / (2.0 * H);
            worst = worst.max(rel_err(grad.as_slice()[idx], numeric));
        }
    }
    worst
}

fn tiny_model(activation: ActivationKind, seed: u64) -> MlpModel {
    let cfg = MlpConfig {
        hidden_dim: 6,
        num_layers: 3,
        seed,
        ..MlpConfig::new(5, 3, activation)
    };
    MlpModel::build(&cfg).unwrap()
}

fn tiny_batch() -> (Matrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    (random(&mut rng, 4, 5, 1.0), vec![0, 1, 2, 1])
}

/// Randomizes every parameter so zero-initialized ones (F, B) carry
/// gradient signal through all paths.
fn jitter(model: &mut MlpModel, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in model.params_mut() {
        for v in p.as_mut_slice() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
}

#[test]
fn mlp_with_every_activation() {
    let (x, y) = tiny_batch();
    let kinds = [
        ActivationKind::Identity,
        ActivationKind::Tanh,
        ActivationKind::Sigmoid,
        ActivationKind::Softmax,
        ActivationKind::Softplus,
        ActivationKind::Prelu,
    ];
    for kind in kinds {
        let mut m = tiny_model(kind.clone(), 3);
        jitter(&mut m, 4);
        let worst = check_model(&m, &x, &y);
        assert!(worst < TOL, "{}: {worst:e}", kind.name());
    }
}

#[test]
fn mlp_with_ogab_every_sigma_and_ablation() {
    let (x, y) = tiny_batch();
    for sigma in [Smooth::Tanh, Smooth::Sigmoid, Smooth::Softplus] {
        let base = OgabOptions {
            sigma,
            ..OgabOptions::with_groups(3)
        };
        for opts in [base, base.without_orthogonality(), base.without_group_bias()] {
            let mut m = tiny_model(ActivationKind::Ogab(opts), 8);
            jitter(&mut m, 9);
            let worst = check_model(&m, &x, &y);
            assert!(worst < TOL, "{opts:?}: {worst:e}");
        }
    }
}

#[test]
fn single_ogab_layer_parameters() {
    // A, s, F, M, B of one layer, with a non-trivial rotation
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut layer = OgabLayer::init(5, &OgabOptions::with_groups(4), 2).unwrap();
    for p in layer.params_mut() {
        *p = random(&mut rng, p.rows(), p.cols(), 0.8);
    }
    let params: Vec<Matrix> = layer.params().into_iter().cloned().collect();
    let x = random(&mut rng, 4, 5, 1.0);
    let worst = check(&params, |t, v| ogab_graph(t, &x, v));
    assert!(worst < TOL, "{worst:e}");
}

/// Y = s ⊙ tanh(X·Qᵀ + softmax(X·M + B)·F), written out op by op.
fn ogab_graph(t: &mut Tape, x: &Matrix, v: &[Var]) -> Result<Var> {
    let (a, s, f, m, b) = (v[0], v[1], v[2], v[3], v[4]);
    let d = t.shape(a).0;
    let xv = t.constant(x.clone());
    let at = t.transpose(a)?;
    let skew = t.sub(a, at)?;
    let i = t.constant(Matrix::identity(d));
    let lhs = t.sub(i, skew)?;
    let rhs = t.add(i, skew)?;
    let q = t.solve(lhs, rhs)?;
    let u = t.matmul_nt(xv, q)?;
    let logits = t.matmul(xv, m)?;
    let logits = t.add_row(logits, b)?;
    let p = t.softmax_rows(logits)?;
    let vb = t.matmul(p, f)?;
    let z = t.add(u, vb)?;
    let act = t.tanh(z)?;
    t.scale_rows(act, s)
}

#[test]
fn handwritten_graph_matches_the_layer() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut layer = OgabLayer::init(5, &OgabOptions::with_groups(4), 2).unwrap();
    for p in layer.params_mut() {
        *p = random(&mut rng, p.rows(), p.cols(), 0.8);
    }
    let x = random(&mut rng, 4, 5, 1.0);
    let mut t = Tape::new();
    let vars: Vec<Var> = layer.params().into_iter().map(|p| t.param(p.clone())).collect();
    let out = ogab_graph(&mut t, &x, &vars).unwrap();
    assert!(t.value(out).max_abs_diff(&layer.forward(&x).unwrap()).unwrap() < 1e-12);
}
