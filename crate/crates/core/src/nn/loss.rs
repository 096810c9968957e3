use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    SoftmaxCrossEntropy,
    ReconstructionMse,
}

/// Row-wise numerically stable softmax of `(batch, classes)` logits.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let (b, k) = logits.dims2("softmax")?;
    let mut out = logits.clone();
    for r in out.data_mut().chunks_mut(k.max(1)).take(b) {
        let m = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in r.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in r.iter_mut() {
            *v /= s;
        }
    }
    Ok(out)
}

/// Mean cross-entropy over the batch and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &Tensor, targets: &[usize]) -> Result<(f64, Tensor)> {
    let (b, k) = logits.dims2("cross_entropy")?;
    if targets.len() != b {
        return Err(Error::dim("cross_entropy", b, targets.len()));
    }
    let mut grad = softmax(logits)?;
    let mut loss = 0.0;
    let gd = grad.data_mut();
    for (i, &t) in targets.iter().enumerate() {
        if t >= k {
            return Err(Error::Input(format!("target {t} out of range for {k} classes")));
        }
        let row = &mut gd[i * k..(i + 1) * k];
        loss -= row[t].max(f64::MIN_POSITIVE).ln();
        row[t] -= 1.0;
        for v in row.iter_mut() {
            *v /= b as f64;
        }
    }
    Ok((loss / b as f64, grad))
}

/// Mean squared error over every element and its gradient.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::dim(
            "mse",
            format!("{:?}", target.shape()),
            format!("{:?}", pred.shape()),
        ));
    }
    let n = pred.len().max(1) as f64;
    let mut grad = pred.clone();
    let mut loss = 0.0;
    for (g, t) in grad.data_mut().iter_mut().zip(target.data()) {
        let d = *g - t;
        loss += d * d;
        *g = 2.0 * d / n;
    }
    Ok((loss / n, grad))
}
