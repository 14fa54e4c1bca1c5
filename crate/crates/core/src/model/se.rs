//! Squeeze-and-excitation channel attention.
//!
//! `z = mean_W(u)`, `s = sigmoid(W2 relu(W1 z + b1) + b2)`, output `s_c * u_c`.

use super::layers::{missing_cache, BatchNorm, Dense, Init, Params};
use crate::error::{shape_err, Result};
use crate::tensor::{
    global_avg_pool1d, global_avg_pool1d_backward, relu_backward, relu_forward, sigmoid_backward,
    sigmoid_forward, NormMode, ParamSlot, Real, Tensor,
};

#[derive(Clone, Debug)]
struct SeCache<T> {
    input: Tensor<T>,
    hidden: Tensor<T>,
    scale: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct SeBlock<T: Real> {
    pub fc1: Dense<T>,
    pub fc2: Dense<T>,
    cache: Option<SeCache<T>>,
}

/// Width of the squeeze layer: `C / r`, rounded down, at least one unit.
pub fn se_hidden(channels: usize, reduction: usize) -> usize {
    (channels / reduction.max(1)).max(1)
}

impl<T: Real> SeBlock<T> {
    pub fn new(name: &str, channels: usize, reduction: usize, init: &mut Init) -> Self {
        let hidden = se_hidden(channels, reduction);
        Self {
            fc1: Dense::new(&format!("{name}.fc1"), channels, hidden, init),
            fc2: Dense::new(&format!("{name}.fc2"), hidden, channels, init),
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.fc1.weight.value.length()
    }

    /// Squeeze and excitation only: the `[b, 1, C]` scale vector.
    pub fn scale(&mut self, u: &Tensor<T>, mode: NormMode) -> Result<Tensor<T>> {
        if u.channels() != self.channels() {
            return Err(shape_err!(
                "SE block built for {} channels got {}",
                self.channels(),
                u.channels()
            ));
        }
        let z = global_avg_pool1d(u)?;
        let hidden = relu_forward(&self.fc1.forward(&z, mode)?);
        let scale = sigmoid_forward(&self.fc2.forward(&hidden, mode)?);
        if mode == NormMode::Train {
            self.cache = Some(SeCache {
                input: u.clone(),
                hidden,
                scale: scale.clone(),
            });
        }
        Ok(scale)
    }

    pub fn forward(&mut self, u: &Tensor<T>, mode: NormMode) -> Result<Tensor<T>> {
        let s = self.scale(u, mode)?;
        let [b, w, c] = u.shape();
        let mut out = u.clone();
        for n in 0..b {
            let sn = s.sample(n);
            for row in out.sample_mut(n).chunks_exact_mut(c) {
                for (v, &f) in row.iter_mut().zip(sn) {
                    *v *= f;
                }
            }
        }
        debug_assert_eq!(out.length(), w);
        Ok(out)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let SeCache { input, hidden, scale } =
            self.cache.take().ok_or_else(|| missing_cache(&self.fc1.weight.name))?;
        if grad.shape() != input.shape() {
            return Err(shape_err!("SE grad {:?} vs input {:?}", grad.shape(), input.shape()));
        }
        let [b, w, c] = input.shape();
        let mut grad_in = grad.clone();
        let mut grad_s = Tensor::zeros([b, 1, c]);
        for n in 0..b {
            let sn = scale.sample(n);
            let mut acc = vec![0.0f64; c];
            for (gr, ur) in grad_in
                .sample_mut(n)
                .chunks_exact_mut(c)
                .zip(input.sample(n).chunks_exact(c))
            {
                for ch in 0..c {
                    acc[ch] += gr[ch].as_f64() * ur[ch].as_f64();
                    gr[ch] *= sn[ch];
                }
            }
            for (g, a) in grad_s.sample_mut(n).iter_mut().zip(acc) {
                *g = T::lit(a);
            }
        }
        let g = sigmoid_backward(&grad_s, &scale)?;
        let g = self.fc2.backward(&g)?;
        let g = relu_backward(&g, &hidden)?;
        let gz = self.fc1.backward(&g)?;
        grad_in.add_assign(&global_avg_pool1d_backward(&gz, w)?)?;
        Ok(grad_in)
    }
}

impl<T: Real> Params<T> for SeBlock<T> {
    fn params<'a>(&'a self, out: &mut Vec<&'a ParamSlot<T>>) {
        self.fc1.params(out);
        self.fc2.params(out);
    }
    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamSlot<T>>) {
        self.fc1.params_mut(out);
        self.fc2.params_mut(out);
    }
    fn norms<'a>(&'a self, _: &mut Vec<&'a BatchNorm<T>>) {}
    fn norms_mut<'a>(&'a mut self, _: &mut Vec<&'a mut BatchNorm<T>>) {}
}
