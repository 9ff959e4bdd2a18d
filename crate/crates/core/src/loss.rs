//! Cross-entropy training objective over per-position label distributions.

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::SeqTensor;

/// Mean over positions of `-log p(gold)`, plus the gradient w.r.t. the
/// pre-softmax logits, which for softmax + cross-entropy collapses to
/// `(probs - onehot) / n`.
pub fn cross_entropy_loss<S: Scalar>(
    probs: &SeqTensor<S>,
    labels: &[Label],
) -> Result<(S, SeqTensor<S>)> {
    if labels.len() != probs.rows() {
        return Err(Error::dimension(
            "cross_entropy_loss",
            format!("{} labels", probs.rows()),
            format!("{} labels", labels.len()),
        ));
    }
    let n = probs.rows();
    let num_classes = probs.cols();
    let inv_n = S::from_f64(1.0 / n as f64);
    let mut grad = SeqTensor::zeros(n, num_classes);
    let mut loss = S::zero();
    for pos in 0..n {
        let gold = labels[pos].index();
        if gold >= num_classes {
            return Err(Error::data(format!(
                "label index {gold} out of range for {num_classes} classes at position {pos}"
            )));
        }
        let p_row = probs.row(pos);
        // Clamp keeps the reported loss finite when a probability underflows
        // to zero; the gradient does not go through the log.
        loss -= p_row[gold].max(S::min_positive_value()).ln();
        let g_row = grad.row_mut(pos);
        for c in 0..num_classes {
            let onehot = if c == gold { S::one() } else { S::zero() };
            g_row[c] = (p_row[c] - onehot) * inv_n;
        }
    }
    Ok((loss * inv_n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let probs = SeqTensor::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let labels = vec![Label::B, Label::O];
        let (loss, grad) = cross_entropy_loss(&probs, &labels).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn uniform_probs_cost_ln3() {
        let third = 1.0 / 3.0;
        let probs = SeqTensor::from_rows(&[vec![third; 3], vec![third; 3]]);
        let labels = vec![Label::I, Label::B];
        let (loss, _) = cross_entropy_loss(&probs, &labels).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn quarter_probability_costs_ln4() {
        let probs = SeqTensor::from_rows(&[vec![0.5, 0.25, 0.25]]);
        let labels = vec![Label::I];
        let (loss, _) = cross_entropy_loss(&probs, &labels).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gradient_is_probs_minus_onehot_over_n() {
        let probs = SeqTensor::<f64>::from_rows(&[vec![0.5, 0.25, 0.25], vec![0.2, 0.3, 0.5]]);
        let labels = vec![Label::B, Label::O];
        let (_, grad) = cross_entropy_loss(&probs, &labels).unwrap();
        let want = [
            (0.5 - 1.0) / 2.0,
            0.25 / 2.0,
            0.25 / 2.0,
            0.2 / 2.0,
            0.3 / 2.0,
            (0.5 - 1.0) / 2.0,
        ];
        for (g, w) in grad.data().iter().zip(want.iter()) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn label_length_mismatch_errors() {
        let probs = SeqTensor::from_rows(&[vec![1.0, 0.0, 0.0]]);
        assert!(cross_entropy_loss(&probs, &[Label::B, Label::O]).is_err());
    }
}
