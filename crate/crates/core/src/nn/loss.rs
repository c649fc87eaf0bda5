//! Softmax classifier loss, stabilized by max-logit subtraction.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Softmax over a logit vector.
pub fn softmax_probs(logits: &Tensor) -> Tensor {
    let max = logits.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs = logits.map(|v| (v - max).exp());
    let sum: f64 = probs.data().iter().sum();
    for p in probs.data_mut() {
        *p /= sum;
    }
    probs
}

/// Cross-entropy of the softmax distribution against a hard label, plus a
/// caller-supplied regularization term. Returns `(loss, probs)`.
pub fn softmax_cross_entropy(
    logits: &Tensor,
    label: usize,
    l2_term: f64,
) -> Result<(f64, Tensor)> {
    let k = logits.len();
    if label >= k {
        return Err(Error::InvalidLabel { value: label, num_classes: k });
    }
    let max = logits.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum_exp: f64 = logits.data().iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    let loss = log_sum_exp - (logits.data()[label] - max) + l2_term;
    Ok((loss, softmax_probs(logits)))
}
