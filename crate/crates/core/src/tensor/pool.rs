use super::{Real, Tensor};
use crate::error::{shape_err, Result};

/// Mean over the length axis: `[b, W, C] -> [b, 1, C]`.
pub fn global_avg_pool1d<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let [b, w, c] = input.shape();
    if w == 0 {
        return Err(shape_err!("cannot pool an empty length axis"));
    }
    let mut out = Tensor::zeros([b, 1, c]);
    for s in 0..b {
        let mut acc = vec![0.0f64; c];
        for row in input.sample(s).chunks_exact(c) {
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += v.as_f64();
            }
        }
        for (o, a) in out.sample_mut(s).iter_mut().zip(acc) {
            *o = T::lit(a / w as f64);
        }
    }
    Ok(out)
}

/// Spreads `grad_out` (`[b, 1, C]`) uniformly over `length` positions.
pub fn global_avg_pool1d_backward<T: Real>(grad_out: &Tensor<T>, length: usize) -> Result<Tensor<T>> {
    let [b, one, c] = grad_out.shape();
    if one != 1 || length == 0 {
        return Err(shape_err!("pool grad must be [b, 1, C], got {:?}", grad_out.shape()));
    }
    let scale = T::one() / T::lit(length as f64);
    let mut out = Tensor::zeros([b, length, c]);
    for s in 0..b {
        let g = grad_out.sample(s);
        for row in out.sample_mut(s).chunks_exact_mut(c) {
            for (o, &v) in row.iter_mut().zip(g) {
                *o = v * scale;
            }
        }
    }
    Ok(out)
}
