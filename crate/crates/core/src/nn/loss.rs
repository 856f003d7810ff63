use crate::error::{Error, Result};
use crate::qt::logistic;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Multi-class softmax followed by cross-entropy.
    SoftmaxCrossEntropy,
    /// Single logit, binary cross-entropy on `logistic(z)`.
    Logistic,
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Returns `(loss, ∂loss/∂logits)`; the gradient is `softmax − one_hot`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    let log_z = max + sum.ln();
    let loss = log_z - logits[label];
    let mut grad: Vec<f64> = logits.iter().map(|&z| (z - log_z).exp()).collect();
    grad[label] -= 1.0;
    Ok((loss.max(0.0), grad))
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Binary cross-entropy of `logistic(z)` against `label ∈ {0, 1}`, computed
/// from the logit. Returns `(loss, ∂loss/∂z)`.
pub fn logistic_loss(z: f64, label: usize) -> (f64, f64) {
    let y = if label == 0 { 0.0 } else { 1.0 };
    // softplus(z) − y·z, rearranged to avoid cancellation for large |z|
    let loss = if y == 1.0 { softplus(-z) } else { softplus(z) };
    (loss, logistic(z) - y)
}
