use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{
    batchnorm1d_backward, batchnorm1d_forward, conv1d_backward, conv1d_forward, dense_backward,
    dense_forward, relu_backward, relu_forward, BatchNormCache, NormMode, Padding, ParamSlot, Real,
    RunningStats, Tensor,
};

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

/// Access to the trainable slots and normalization buffers of a layer tree.
pub trait Params<T: Real> {
    fn params<'a>(&'a self, out: &mut Vec<&'a ParamSlot<T>>);
    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamSlot<T>>);
    fn norms<'a>(&'a self, out: &mut Vec<&'a BatchNorm<T>>);
    fn norms_mut<'a>(&'a mut self, out: &mut Vec<&'a mut BatchNorm<T>>);
}

/// He-uniform draws in construction order; values are sampled in f64 so the
/// same seed yields the same model at any precision.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(rng: ChaCha8Rng) -> Self {
        Self { rng }
    }

    pub fn he_uniform<T: Real>(&mut self, shape: [usize; 3], fan_in: usize) -> Tensor<T> {
        let bound = (6.0 / fan_in as f64).sqrt();
        Tensor::from_fn(shape, |_, _, _| T::lit(self.rng.gen_range(-bound..bound)))
    }
}

/// Same-padded 1-D convolution.
#[derive(Clone, Debug)]
pub struct Conv<T: Real> {
    pub weight: ParamSlot<T>,
    pub bias: ParamSlot<T>,
    pub stride: usize,
    input: Option<Tensor<T>>,
}

impl<T: Real> Conv<T> {
    pub fn new(name: &str, k: usize, c_in: usize, c_out: usize, stride: usize, init: &mut Init) -> Self {
        Self {
            weight: ParamSlot::new(format!("{name}.weight"), init.he_uniform([k, c_in, c_out], k * c_in)),
            bias: ParamSlot::new(format!("{name}.bias"), Tensor::zeros([1, 1, c_out])),
            stride,
            input: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: NormMode) -> Result<Tensor<T>> {
        let y = conv1d_forward(x, &self.weight.value, self.bias.value.data(), self.stride, Padding::Same)?;
        if mode == NormMode::Train {
            self.input = Some(x.clone());
        }
        Ok(y)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.take().ok_or_else(|| missing_cache(&self.weight.name))?;
        let g = conv1d_backward(grad, &x, &self.weight.value, self.stride, Padding::Same)?;
        self.weight.accumulate(g.weights.data())?;
        self.bias.accumulate(&g.bias)?;
        Ok(g.input)
    }
}

impl<T: Real> Params<T> for Conv<T> {
    fn params<'a>(&'a self, out: &mut Vec<&'a ParamSlot<T>>) {
        out.push(&self.weight);
        out.push(&self.bias);
    }
    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamSlot<T>>) {
        out.push(&mut self.weight);
        out.push(&mut self.bias);
    }
    fn norms<'a>(&'a self, _: &mut Vec<&'a BatchNorm<T>>) {}
    fn norms_mut<'a>(&'a mut self, _: &mut Vec<&'a mut BatchNorm<T>>) {}
}

pub(crate) fn missing_cache(name: &str) -> Error {
    Error::InvalidArgument(format!("backward through `{name}` without a train-mode forward"))
}

#[derive(Clone, Debug)]
pub struct BatchNorm<T: Real> {
    pub name: String,
    pub gamma: ParamSlot<T>,
    pub beta: ParamSlot<T>,
    pub stats: RunningStats<T>,
    cache: Option<BatchNormCache<T>>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            name: name.to_string(),
            gamma: ParamSlot::new(format!("{name}.gamma"), Tensor::full([1, 1, channels], T::one())),
            beta: ParamSlot::new(format!("{name}.beta"), Tensor::zeros([1, 1, channels])),
            stats: RunningStats::new(channels),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: NormMode) -> Result<Tensor<T>> {
        let (y, cache) = batchnorm1d_forward(
            x,
            self.gamma.value.data(),
            self.beta.value.data(),
            mode,
            &mut self.stats,
            BN_MOMENTUM,
            BN_EPS,
        )?;
        if mode == NormMode::Train {
            self.cache = Some(cache);
        }
        Ok(y)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or_else(|| missing_cache(&self.name))?;
        let (gi, gg, gb) = batchnorm1d_backward(grad, &cache, self.gamma.value.data())?;
        self.gamma.accumulate(&gg)?;
        self.beta.accumulate(&gb)?;
        Ok(gi)
    }
}

impl<T: Real> Params<T> for BatchNorm<T> {
    fn params<'a>(&'a self, out: &mut Vec<&'a ParamSlot<T>>) {
        out.push(&self.gamma);
        out.push(&self.beta);
    }
    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamSlot<T>>) {
        out.push(&mut self.gamma);
        out.push(&mut self.beta);
    }
    fn norms<'a>(&'a self, out: &mut Vec<&'a BatchNorm<T>>) {
        out.push(self);
    }
    fn norms_mut<'a>(&'a mut self, out: &mut Vec<&'a mut BatchNorm<T>>) {
        out.push(self);
    }
}

/// Convolution, batch normalization and an optional ReLU.
#[derive(Clone, Debug)]
pub struct ConvBn<T: Real> {
    pub name: String,
    pub conv: Conv<T>,
    pub bn: BatchNorm<T>,
    pub relu: bool,
    output: Option<Tensor<T>>,
}

impl<T: Real> ConvBn<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        k: usize,
        c_in: usize,
        c_out: usize,
        stride: usize,
        relu: bool,
        init: &mut Init,
    ) -> Self {
        Self {
            name: name.to_string(),
            conv: Conv::new(&format!("{name}.conv"), k, c_in, c_out, stride, init),
            bn: BatchNorm::new(&format!("{name}.bn"), c_out),
            relu,
            output: None,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.conv.weight.value.channels()
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: NormMode) -> Result<Tensor<T>> {
        let y = self.conv.forward(x, mode)?;
        let mut y = self.bn.forward(&y, mode)?;
        if self.relu {
            y = relu_forward(&y);
            if mode == NormMode::Train {
                self.output = Some(y.clone());
            }
        }
        y.ensure_finite(&self.name)?;
        Ok(y)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let g = if self.relu {
            let y = self.output.take().ok_or_else(|| missing_cache(&self.name))?;
            relu_backward(grad, &y)?
        } else {
            grad.clone()
        };
        let g = self.bn.backward(&g)?;
        self.conv.backward(&g)
    }
}

impl<T: Real> Params<T> for ConvBn<T> {
    fn params<'a>(&'a self, out: &mut Vec<&'a ParamSlot<T>>) {
        self.conv.params(out);
        self.bn.params(out);
    }
    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamSlot<T>>) {
        self.conv.params_mut(out);
        self.bn.params_mut(out);
    }
    fn norms<'a>(&'a self, out: &mut Vec<&'a BatchNorm<T>>) {
        out.push(&self.bn);
    }
    fn norms_mut<'a>(&'a mut self, out: &mut Vec<&'a mut BatchNorm<T>>) {
        out.push(&mut self.bn);
    }
}

/// Fully connected layer on `[b, 1, n]` inputs.
#[derive(Clone, Debug)]
pub struct Dense<T: Real> {
    pub weight: ParamSlot<T>,
    pub bias: ParamSlot<T>,
    input: Option<Tensor<T>>,
}

impl<T: Real> Dense<T> {
    pub fn new(name: &str, n_in: usize, n_out: usize, init: &mut Init) -> Self {
        Self {
            weight: ParamSlot::new(format!("{name}.weight"), init.he_uniform([1, n_in, n_out], n_in)),
            bias: ParamSlot::new(format!("{name}.bias"), Tensor::zeros([1, 1, n_out])),
            input: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: NormMode) -> Result<Tensor<T>> {
        let y = dense_forward(x, &self.weight.value, self.bias.value.data())?;
        if mode == NormMode::Train {
            self.input = Some(x.clone());
        }
        y.ensure_finite(&self.weight.name)?;
        Ok(y)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.take().ok_or_else(|| missing_cache(&self.weight.name))?;
        let g = dense_backward(grad, &x, &self.weight.value)?;
        self.weight.accumulate(g.weights.data())?;
        self.bias.accumulate(&g.bias)?;
        Ok(g.input)
    }

    /// Replaces weights and bias, e.g. to zero an attention path.
    pub fn set(&mut self, weight: &[T], bias: &[T]) -> Result<()> {
        self.weight.set_value(weight)?;
        self.bias.set_value(bias)
    }
}

impl<T: Real> Params<T> for Dense<T> {
    fn params<'a>(&'a self, out: &mut Vec<&'a ParamSlot<T>>) {
        out.push(&self.weight);
        out.push(&self.bias);
    }
    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamSlot<T>>) {
        out.push(&mut self.weight);
        out.push(&mut self.bias);
    }
    fn norms<'a>(&'a self, _: &mut Vec<&'a BatchNorm<T>>) {}
    fn norms_mut<'a>(&'a mut self, _: &mut Vec<&'a mut BatchNorm<T>>) {}
}
