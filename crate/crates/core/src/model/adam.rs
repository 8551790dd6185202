use crate::error::{Error, Result};
use crate::model::TrainConfig;
use crate::tensor::Matrix;

/// First and second moment estimates, one pair per parameter matrix.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(
    params: &mut [&mut Matrix],
    grads: &[Matrix],
    state: &mut AdamState,
    tc: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Contract(format!(
            "adam: {} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    if state.first.is_empty() {
        state.first = params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        state.second = state.first.clone();
    }
    if state.first.len() != params.len() {
        return Err(Error::Contract("adam: state does not match parameter list".into()));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || state.first[i].shape() != p.shape() {
            return Err(Error::Contract(format!(
                "adam: parameter {i} has shape {:?}, gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (tc.adam_beta1, tc.adam_beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first.iter_mut().zip(state.second.iter_mut()))
    {
        let ps = p.as_mut_slice();
        let (ms, vs) = (m.as_mut_slice(), v.as_mut_slice());
        for (k, &gk) in g.as_slice().iter().enumerate() {
            ms[k] = b1 * ms[k] + (1.0 - b1) * gk;
            vs[k] = b2 * vs[k] + (1.0 - b2) * gk * gk;
            let m_hat = ms[k] / c1;
            let v_hat = vs[k] / c2;
            ps[k] -= tc.learning_rate * m_hat / (v_hat.sqrt() + tc.adam_eps);
        }
    }
    Ok(())
}
