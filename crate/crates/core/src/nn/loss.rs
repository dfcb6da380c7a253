//! Scalar losses together with their gradients.

use super::Matrix;
use crate::{Error, Result};

/// Probability clamp used inside logarithms.
pub const PROB_CLAMP: f64 = 1e-12;

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `-log softmax(logits)[label]` and its gradient `p - onehot(label)`.
pub fn softmax_ce(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum_exp: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    let log_z = max + sum_exp.ln();
    let loss = log_z - logits[label];
    let mut grad: Vec<f64> = logits.iter().map(|z| (z - log_z).exp()).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Summed softmax cross-entropy over the rows of `logits`; returns the loss
/// and the gradient w.r.t. the logits.
pub fn softmax_ce_batch(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if logits.rows() != labels.len() {
        return Err(Error::shape(format!(
            "{} logit rows for {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let (loss, g) = softmax_ce(logits.row(i), y)?;
        total += loss;
        grad.row_mut(i).copy_from_slice(&g);
    }
    Ok((total, grad))
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Summed binary cross-entropy `-Σ [d log p + (1-d) log(1-p)]` with `p`
/// clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub fn binary_cross_entropy(probs: &[f64], targets: &[f64]) -> f64 {
    probs
        .iter()
        .zip(targets)
        .map(|(&p, &d)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            -(d * p.ln() + (1.0 - d) * (1.0 - p).ln())
        })
        .sum()
}

/// `ln(1 + e^x)` without overflow or cancellation.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Binary cross-entropy of `sigmoid(logits)`; returns `(loss, probs, dloss/dlogits)`.
///
/// Agrees with [`binary_cross_entropy`] on the probabilities but works in
/// log space, so saturated logits keep a smooth, exact loss. Where the clamp
/// is active the loss is flat, so the gradient is zero there.
pub fn bce_on_logits(logits: &[f64], targets: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let cap = -PROB_CLAMP.ln();
    let mut loss = 0.0;
    let mut probs = Vec::with_capacity(logits.len());
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &d) in logits.iter().zip(targets) {
        let p = sigmoid(z);
        // -ln p = softplus(-z), -ln(1-p) = softplus(z)
        let (neg_ln_p, neg_ln_q) = (softplus(-z), softplus(z));
        let clamped = neg_ln_p > cap || neg_ln_q > cap;
        loss += d * neg_ln_p.min(cap) + (1.0 - d) * neg_ln_q.min(cap);
        probs.push(p);
        grad.push(if clamped { 0.0 } else { p - d });
    }
    (loss, probs, grad)
}

/// `Σ ‖target - pred‖²` and its gradient w.r.t. `pred`.
pub fn squared_error(pred: &Matrix, target: &Matrix) -> (f64, Matrix) {
    assert_eq!(pred.shape(), target.shape(), "squared error shapes");
    let mut grad = pred.sub(target);
    let loss = grad.frobenius_sq();
    grad.scale(2.0);
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_l() {
        for label in 0..4 {
            let (loss, _) = softmax_ce(&[0.3; 4], label).unwrap();
            assert!((loss - 4f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_logits_give_tiny_loss() {
        let (loss, _) = softmax_ce(&[100.0, 0.0, 0.0], 0).unwrap();
        assert!(loss < 1e-40);
    }

    #[test]
    fn out_of_range_label_errors() {
        assert!(matches!(
            softmax_ce(&[0.0, 1.0], 2),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }

    #[test]
    fn bce_at_half_is_ln2() {
        let l = binary_cross_entropy(&[0.5], &[1.0]);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((binary_cross_entropy(&[0.5], &[0.0]) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_vanishes_as_prediction_approaches_target() {
        let near = binary_cross_entropy(&[1.0 - 1e-9, 1e-9], &[1.0, 0.0]);
        assert!(near < 1e-8);
        let exact = binary_cross_entropy(&[1.0, 0.0], &[1.0, 0.0]);
        assert!(exact >= 0.0 && exact < 1e-11);
    }

    #[test]
    fn logit_bce_matches_probability_bce() {
        let z = [-40.0, -3.0, 0.0, 0.7, 25.0, 40.0];
        let d = [0.0, 1.0, 1.0, 0.0, 0.0, 1.0];
        let (l, p, g) = bce_on_logits(&z, &d);
        let moderate = binary_cross_entropy(&p[1..4], &d[1..4]);
        assert!((bce_on_logits(&z[1..4], &d[1..4]).0 - moderate).abs() < 1e-12);
        // -ln(1 - sigmoid(25)) = 25 + ln(1 + e^-25), exact in log space
        let saturated = 25.0 + (-25.0f64).exp().ln_1p();
        assert!((l - moderate - saturated).abs() < 1e-9);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[5], 0.0);
        assert!((g[4] - (p[4] - d[4])).abs() < 1e-15);
        // past the clamp the loss stops growing
        let (l40, _, _) = bce_on_logits(&[40.0], &[0.0]);
        assert_eq!(l40, -PROB_CLAMP.ln());
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1.0, -3.0, 700.0, 2.5]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|v| *v >= 0.0));
    }
}
