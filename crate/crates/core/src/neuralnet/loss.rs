use super::NnError;

/// Probability clamp used by the binary cross-entropy.
pub const BCE_CLAMP: f64 = 1e-7;

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `−log softmax(logits)[label]` and its gradient `softmax − onehot`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>), NnError> {
    if label >= logits.len() {
        return Err(NnError::IndexOutOfRange { index: label, len: logits.len() });
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_total = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
    let loss = log_total - logits[label];
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Binary cross-entropy of one probability against a {0,1} target, with the
/// probability clamped to `[1e-7, 1 − 1e-7]`. Returns `(loss, dloss/dp)`;
/// the derivative is zero where the clamp is active.
pub fn binary_cross_entropy(p: f64, target: f64) -> (f64, f64) {
    let lo = BCE_CLAMP;
    let hi = 1.0 - BCE_CLAMP;
    let clamped = p.clamp(lo, hi);
    let loss = -(target * clamped.ln() + (1.0 - target) * (1.0 - clamped).ln());
    let grad = if p < lo || p > hi { 0.0 } else { -target / clamped + (1.0 - target) / (1.0 - clamped) };
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_k() {
        let (loss, grad) = softmax_cross_entropy(&[0.0; 4], 2).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        let expected = [0.25, 0.25, -0.75, 0.25];
        for (g, e) in grad.iter().zip(expected) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_logits_give_zero_loss() {
        let (loss, _) = softmax_cross_entropy(&[0.0, 1e6, 0.0, 0.0], 1).unwrap();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn label_out_of_range() {
        assert!(matches!(softmax_cross_entropy(&[0.0; 4], 4), Err(NnError::IndexOutOfRange { .. })));
    }

    #[test]
    fn bce_values_and_clamp() {
        let (l, g) = binary_cross_entropy(0.5, 1.0);
        assert!((l - 2f64.ln()).abs() < 1e-12);
        assert!((g + 2.0).abs() < 1e-12);
        let (l, g) = binary_cross_entropy(0.0, 1.0);
        assert!((l + BCE_CLAMP.ln()).abs() < 1e-9);
        assert_eq!(g, 0.0);
    }
}
