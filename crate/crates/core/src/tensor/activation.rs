use super::{Real, Tensor};
use crate::error::{shape_err, Result};

pub fn relu_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of ReLU given its cached output.
pub fn relu_backward<T: Real>(grad_out: &Tensor<T>, output: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.shape() != output.shape() {
        return Err(shape_err!("relu grad {:?} vs output {:?}", grad_out.shape(), output.shape()));
    }
    let data = grad_out
        .data()
        .iter()
        .zip(output.data())
        .map(|(&g, &y)| if y > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(grad_out.shape(), data)
}

/// Logistic function, clamped so the result lies strictly inside (0, 1).
pub fn sigmoid<T: Real>(x: T) -> T {
    let y = if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    };
    let upper = T::one() - T::epsilon() / T::lit(2.0);
    y.max(T::min_positive_value()).min(upper)
}

pub fn sigmoid_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid)
}

/// Gradient of the sigmoid given its cached output `y`: `g * y * (1 - y)`.
pub fn sigmoid_backward<T: Real>(grad_out: &Tensor<T>, output: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.shape() != output.shape() {
        return Err(shape_err!(
            "sigmoid grad {:?} vs output {:?}",
            grad_out.shape(),
            output.shape()
        ));
    }
    let data = grad_out
        .data()
        .iter()
        .zip(output.data())
        .map(|(&g, &y)| g * y * (T::one() - y))
        .collect();
    Tensor::new(grad_out.shape(), data)
}
