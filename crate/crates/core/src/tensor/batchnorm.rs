use serde::{Deserialize, Serialize};

use super::{Real, Tensor};
use crate::error::{invalid, shape_err, Result};

/// Whether normalization uses batch statistics (and updates running ones)
/// or the stored running statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormMode {
    Train,
    Infer,
}

/// Per-channel running mean and (unbiased) variance.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Real> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
        }
    }
}

/// What the backward pass needs from a batchnorm forward.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    pub x_hat: Tensor<T>,
    pub inv_std: Vec<f64>,
    pub mode: NormMode,
}

/// Normalizes each channel over batch x length.
///
/// `momentum` weights the new batch statistic in the running average:
/// `running = (1 - momentum) * running + momentum * batch`.
pub fn batchnorm1d_forward<T: Real>(
    input: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    mode: NormMode,
    stats: &mut RunningStats<T>,
    momentum: f64,
    eps: f64,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    let c = input.channels();
    if gamma.len() != c || beta.len() != c || stats.mean.len() != c || stats.var.len() != c {
        return Err(shape_err!("batchnorm parameters do not match {} channels", c));
    }
    let n = input.batch() * input.length();

    let (mean, inv_std) = match mode {
        NormMode::Train => {
            if n < 2 {
                return Err(invalid!(
                    "batchnorm train mode needs at least 2 values per channel, got {n}"
                ));
            }
            let mut sum = vec![0.0f64; c];
            for row in input.data().chunks_exact(c) {
                for (s, &v) in sum.iter_mut().zip(row) {
                    *s += v.as_f64();
                }
            }
            let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
            let mut sq = vec![0.0f64; c];
            for row in input.data().chunks_exact(c) {
                for ((s, &v), m) in sq.iter_mut().zip(row).zip(&mean) {
                    let d = v.as_f64() - m;
                    *s += d * d;
                }
            }
            let var: Vec<f64> = sq.iter().map(|s| s / n as f64).collect();
            for ch in 0..c {
                let unbiased = sq[ch] / (n - 1) as f64;
                stats.mean[ch] =
                    T::lit((1.0 - momentum) * stats.mean[ch].as_f64() + momentum * mean[ch]);
                stats.var[ch] =
                    T::lit((1.0 - momentum) * stats.var[ch].as_f64() + momentum * unbiased);
            }
            let inv_std = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
            (mean, inv_std)
        }
        NormMode::Infer => (
            stats.mean.iter().map(|m| m.as_f64()).collect(),
            stats
                .var
                .iter()
                .map(|v| 1.0 / (v.as_f64() + eps).sqrt())
                .collect::<Vec<f64>>(),
        ),
    };

    let mean_t: Vec<T> = mean.iter().map(|&m| T::lit(m)).collect();
    let inv_t: Vec<T> = inv_std.iter().map(|&v| T::lit(v)).collect();
    let mut x_hat = Tensor::zeros(input.shape());
    let mut out = Tensor::zeros(input.shape());
    for ((xr, hr), yr) in input
        .data()
        .chunks_exact(c)
        .zip(x_hat.data_mut().chunks_exact_mut(c))
        .zip(out.data_mut().chunks_exact_mut(c))
    {
        for ch in 0..c {
            let h = (xr[ch] - mean_t[ch]) * inv_t[ch];
            hr[ch] = h;
            yr[ch] = gamma[ch] * h + beta[ch];
        }
    }
    Ok((out, BatchNormCache { x_hat, inv_std, mode }))
}

/// Returns `(grad_input, grad_gamma, grad_beta)`.
pub fn batchnorm1d_backward<T: Real>(
    grad_out: &Tensor<T>,
    cache: &BatchNormCache<T>,
    gamma: &[T],
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    if grad_out.shape() != cache.x_hat.shape() {
        return Err(shape_err!(
            "batchnorm grad {:?} vs cached {:?}",
            grad_out.shape(),
            cache.x_hat.shape()
        ));
    }
    let c = grad_out.channels();
    let n = (grad_out.batch() * grad_out.length()) as f64;
    let mut sum_g = vec![0.0f64; c];
    let mut sum_gx = vec![0.0f64; c];
    for (gr, hr) in grad_out
        .data()
        .chunks_exact(c)
        .zip(cache.x_hat.data().chunks_exact(c))
    {
        for ch in 0..c {
            let g = gr[ch].as_f64();
            sum_g[ch] += g;
            sum_gx[ch] += g * hr[ch].as_f64();
        }
    }
    let mut grad_in = Tensor::zeros(grad_out.shape());
    let scale: Vec<T> = (0..c)
        .map(|ch| T::lit(gamma[ch].as_f64() * cache.inv_std[ch]))
        .collect();
    let (mean_g, mean_gx): (Vec<T>, Vec<T>) = match cache.mode {
        NormMode::Train => (
            sum_g.iter().map(|s| T::lit(s / n)).collect(),
            sum_gx.iter().map(|s| T::lit(s / n)).collect(),
        ),
        NormMode::Infer => (vec![T::zero(); c], vec![T::zero(); c]),
    };
    for ((gr, hr), dr) in grad_out
        .data()
        .chunks_exact(c)
        .zip(cache.x_hat.data().chunks_exact(c))
        .zip(grad_in.data_mut().chunks_exact_mut(c))
    {
        for ch in 0..c {
            dr[ch] = scale[ch] * (gr[ch] - mean_g[ch] - hr[ch] * mean_gx[ch]);
        }
    }
    Ok((
        grad_in,
        sum_gx.into_iter().map(T::lit).collect(),
        sum_g.into_iter().map(T::lit).collect(),
    ))
}
