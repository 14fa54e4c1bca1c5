use serde::{Deserialize, Serialize};

use super::{Real, Tensor};
use crate::error::{shape_err, Result};

/// A trainable array with its gradient and Adam moments, all the same shape.
#[derive(Clone, Debug)]
pub struct ParamSlot<T = f32> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub adam_m: Tensor<T>,
    pub adam_v: Tensor<T>,
    pub step_count: u64,
}

impl<T: Real> ParamSlot<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let shape = value.shape();
        Self {
            name: name.into(),
            value,
            grad: Tensor::zeros(shape),
            adam_m: Tensor::zeros(shape),
            adam_v: Tensor::zeros(shape),
            step_count: 0,
        }
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(T::zero());
    }

    /// Adds `g` into the stored gradient.
    pub fn accumulate(&mut self, g: &[T]) -> Result<()> {
        if g.len() != self.grad.len() {
            return Err(shape_err!(
                "gradient of length {} for parameter `{}` of {} values",
                g.len(),
                self.name,
                self.grad.len()
            ));
        }
        for (acc, &v) in self.grad.data_mut().iter_mut().zip(g) {
            *acc += v;
        }
        Ok(())
    }

    /// Replaces the value, keeping shape; optimizer state is untouched.
    pub fn set_value(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.value.len() {
            return Err(shape_err!(
                "{} values for parameter `{}` of {}",
                values.len(),
                self.name,
                self.value.len()
            ));
        }
        self.value.data_mut().copy_from_slice(values);
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// One bias-corrected Adam update. The gradient is left in place; call
/// [`ParamSlot::zero_grad`] before the next accumulation.
pub fn adam_step<T: Real>(slot: &mut ParamSlot<T>, cfg: &AdamConfig) {
    slot.step_count += 1;
    let t = slot.step_count as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let ParamSlot {
        value,
        grad,
        adam_m,
        adam_v,
        ..
    } = slot;
    for (((x, &g), m), v) in value
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(adam_m.data_mut())
        .zip(adam_v.data_mut())
    {
        let g = g.as_f64();
        let m_new = cfg.beta1 * m.as_f64() + (1.0 - cfg.beta1) * g;
        let v_new = cfg.beta2 * v.as_f64() + (1.0 - cfg.beta2) * g * g;
        *m = T::lit(m_new);
        *v = T::lit(v_new);
        let m_hat = m_new / c1;
        let v_hat = v_new / c2;
        *x = T::lit(x.as_f64() - cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps));
    }
}
