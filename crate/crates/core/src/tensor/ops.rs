//! Pointwise and row-wise functions shared by the tape and the plain
//! matrix API.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus_scalar(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn tanh(x: &Matrix) -> Matrix {
    x.map(f64::tanh)
}

pub fn sigmoid(x: &Matrix) -> Matrix {
    x.map(sigmoid_scalar)
}

/// `max(0, x)`; the subgradient at 0 is taken as 0.
pub fn relu(x: &Matrix) -> Matrix {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

pub fn softplus(x: &Matrix) -> Matrix {
    x.map(softplus_scalar)
}

/// `max(0, x) + alpha·min(0, x)` with one `alpha` per column.
pub fn prelu(x: &Matrix, alpha: &Matrix) -> Result<Matrix> {
    if alpha.rows() != 1 || alpha.cols() != x.cols() {
        return Err(Error::shape("prelu", x.shape(), alpha.shape()));
    }
    let a = alpha.as_slice();
    let cols = x.cols();
    let mut out = x.clone();
    for (idx, v) in out.as_mut_slice().iter_mut().enumerate() {
        if *v <= 0.0 {
            *v *= a[idx % cols];
        }
    }
    out.ensure_finite("prelu")
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows(x: &Matrix) -> Result<Matrix> {
    if !x.is_finite() {
        return Err(Error::InvalidInput("softmax_rows on non-finite input".into()));
    }
    let cols = x.cols();
    let mut out = x.clone();
    for row in out.as_mut_slice().chunks_mut(cols.max(1)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Ok(out)
}

/// Per-row `−log softmax(row)[label]`, evaluated as log-sum-exp so that
/// confidently correct rows keep full relative precision.
pub fn cross_entropy_rows(logits: &Matrix, labels: &[usize]) -> Result<Vec<f64>> {
    if labels.len() != logits.rows() {
        return Err(Error::shape("cross_entropy", logits.shape(), (labels.len(), 1)));
    }
    let classes = logits.cols();
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidLabel { label, classes });
    }
    if !logits.is_finite() {
        return Err(Error::InvalidInput("cross_entropy on non-finite logits".into()));
    }
    Ok(logits
        .row_iter()
        .zip(labels)
        .map(|(row, &label)| {
            let mut argmax = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[argmax] {
                    argmax = j;
                }
            }
            let max = row[argmax];
            // the max term contributes exactly 1 to the normalizer
            let rest: f64 = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != argmax)
                .map(|(_, &v)| (v - max).exp())
                .sum();
            (max - row[label]) + rest.ln_1p()
        })
        .collect())
}

/// Mean cross-entropy between one-hot labels and `softmax(logits)`.
pub fn cross_entropy_from_logits(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::InvalidInput("cross_entropy on an empty batch".into()));
    }
    let rows = cross_entropy_rows(logits, labels)?;
    Ok(rows.iter().sum::<f64>() / rows.len() as f64)
}
