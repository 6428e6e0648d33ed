//! Softmax cross-entropy, shared by the pretext and downstream paths.

use ndarray::{Array2, ArrayView2};

use super::layers::softmax_inplace;
use super::scalar::Scalar;

/// Mean cross-entropy over rows plus dL/dlogits. Loss is returned in f64 so
/// epoch accumulation does not depend on the training element type.
pub fn cross_entropy<F: Scalar>(logits: &ArrayView2<F>, labels: &[usize]) -> (f64, Array2<F>) {
    let (n, c) = logits.dim();
    assert_eq!(labels.len(), n, "one label per logit row");
    let mut probs = logits.to_owned();
    let mut loss = 0.0f64;
    for (i, mut row) in probs.rows_mut().into_iter().enumerate() {
        softmax_inplace(row.as_slice_mut().unwrap());
        debug_assert!(labels[i] < c, "label out of range");
        loss -= row[labels[i]].as_f64().max(1e-300).ln();
    }
    loss /= n as f64;

    // dL/dlogits = (softmax - onehot) / n
    let inv_n = F::from_f64(1.0 / n as f64);
    let mut grad = probs;
    for (i, mut row) in grad.rows_mut().into_iter().enumerate() {
        row[labels[i]] = row[labels[i]] - F::one();
        row.mapv_inplace(|v| v * inv_n);
    }
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_logits_give_ln_c() {
        let logits = array![[0.0f64, 0.0], [0.0, 0.0]];
        let (loss, _) = cross_entropy(&logits.view(), &[0, 1]);
        assert!((loss - (2.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn gradient_points_away_from_wrong_class() {
        let logits = array![[2.0f64, -1.0]];
        let (_, grad) = cross_entropy(&logits.view(), &[1]);
        assert!(grad[[0, 0]] > 0.0);
        assert!(grad[[0, 1]] < 0.0);
        // softmax gradient rows sum to zero
        assert!((grad[[0, 0]] + grad[[0, 1]]).abs() < 1e-15);
    }

    #[test]
    fn loss_is_shift_invariant() {
        let a = array![[1.0f64, 2.0, 3.0]];
        let b = array![[11.0f64, 12.0, 13.0]];
        let (la, _) = cross_entropy(&a.view(), &[2]);
        let (lb, _) = cross_entropy(&b.view(), &[2]);
        assert!((la - lb).abs() < 1e-12);
    }
}
