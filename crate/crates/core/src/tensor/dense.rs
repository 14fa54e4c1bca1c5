use super::gemm::{gemm, MatRef};
use super::{Real, Tensor};
use crate::error::{shape_err, Result};

/// Affine map on `[b, 1, n]` inputs with `weights` shaped `[1, n, m]`.
pub fn dense_forward<T: Real>(input: &Tensor<T>, weights: &Tensor<T>, bias: &[T]) -> Result<Tensor<T>> {
    let (b, n, m) = check(input, weights)?;
    if bias.len() != m {
        return Err(shape_err!("dense bias length {} != {}", bias.len(), m));
    }
    let mut out = Tensor::zeros([b, 1, m]);
    for row in out.data_mut().chunks_exact_mut(m) {
        row.copy_from_slice(bias);
    }
    gemm(
        MatRef::new(input.data(), b, n),
        MatRef::new(weights.data(), n, m),
        T::one(),
        out.data_mut(),
    );
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
}

pub fn dense_backward<T: Real>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weights: &Tensor<T>,
) -> Result<DenseGrads<T>> {
    let (b, n, m) = check(input, weights)?;
    if grad_out.shape() != [b, 1, m] {
        return Err(shape_err!("dense grad {:?} != [{b}, 1, {m}]", grad_out.shape()));
    }
    let gy = MatRef::new(grad_out.data(), b, m);
    let mut grad_in = Tensor::zeros([b, 1, n]);
    gemm(gy, MatRef::new(weights.data(), n, m).t(), T::zero(), grad_in.data_mut());
    let mut grad_w = Tensor::zeros([1, n, m]);
    gemm(MatRef::new(input.data(), b, n).t(), gy, T::zero(), grad_w.data_mut());
    let mut grad_b = vec![T::zero(); m];
    for row in grad_out.data().chunks_exact(m) {
        for (acc, &v) in grad_b.iter_mut().zip(row) {
            *acc += v;
        }
    }
    Ok(DenseGrads {
        input: grad_in,
        weights: grad_w,
        bias: grad_b,
    })
}

fn check<T: Real>(input: &Tensor<T>, weights: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let [one, n, m] = weights.shape();
    if one != 1 || input.length() != 1 || input.channels() != n {
        return Err(shape_err!(
            "dense input {:?} incompatible with weights {:?}",
            input.shape(),
            weights.shape()
        ));
    }
    Ok((input.batch(), n, m))
}
