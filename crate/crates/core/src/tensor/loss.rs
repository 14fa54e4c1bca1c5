use super::{Real, Tensor};
use crate::error::{invalid, shape_err, Result};

/// Row-wise softmax of `[b, 1, K]` logits, max-subtracted, in f64.
///
/// Entries are clamped into the open interval (0, 1) so that extreme logits
/// never produce exact zeros or ones.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let [b, one, k] = logits.shape();
    if one != 1 || k == 0 {
        return Err(shape_err!("softmax expects [b, 1, K], got {:?}", logits.shape()));
    }
    let mut out = Tensor::zeros([b, 1, k]);
    for (row, dst) in logits.data().chunks_exact(k).zip(out.data_mut().chunks_exact_mut(k)) {
        let upper = T::one() - T::epsilon() / T::lit(2.0);
        for (d, p) in dst.iter_mut().zip(softmax_row(row)) {
            *d = T::lit(p).max(T::min_positive_value()).min(upper);
        }
    }
    Ok(out)
}

pub(crate) fn softmax_row<T: Real>(row: &[T]) -> Vec<f64> {
    let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Clone, Debug)]
pub struct LossOutput<T> {
    /// Mean negative log-likelihood over the batch.
    pub loss: f64,
    /// `(softmax - onehot) / b`.
    pub grad: Tensor<T>,
    pub probs: Tensor<T>,
}

pub fn softmax_cross_entropy<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<LossOutput<T>> {
    let [b, one, k] = logits.shape();
    if one != 1 || labels.len() != b {
        return Err(shape_err!(
            "cross-entropy expects [b, 1, K] logits and b labels, got {:?} and {}",
            logits.shape(),
            labels.len()
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(invalid!("label {bad} out of range for {k} classes"));
    }
    let mut grad = Tensor::zeros([b, 1, k]);
    let mut probs = Tensor::zeros([b, 1, k]);
    let mut total = 0.0f64;
    let inv_b = 1.0 / b as f64;
    for (s, &label) in labels.iter().enumerate() {
        let row = &logits.data()[s * k..(s + 1) * k];
        let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
        let log_sum = row
            .iter()
            .map(|v| (v.as_f64() - max).exp())
            .sum::<f64>()
            .ln();
        total += log_sum - (row[label].as_f64() - max);
        let p = softmax_row(row);
        let g = &mut grad.data_mut()[s * k..(s + 1) * k];
        for (j, (gj, pj)) in g.iter_mut().zip(&p).enumerate() {
            let target = if j == label { 1.0 } else { 0.0 };
            *gj = T::lit((pj - target) * inv_b);
        }
        for (d, pj) in probs.data_mut()[s * k..(s + 1) * k].iter_mut().zip(p) {
            *d = T::lit(pj);
        }
    }
    Ok(LossOutput {
        loss: total * inv_b,
        grad,
        probs,
    })
}
