//! Exchange between parallel branches whose lengths halve from one branch to
//! the next.

use super::layers::{missing_cache, BatchNorm, ConvBn, Init, Params};
use crate::error::{shape_err, Result};
use crate::tensor::{
    relu_backward, relu_forward, upsample1d, upsample1d_backward, NormMode, ParamSlot, Real, Tensor,
};

/// Maps one source branch onto a target branch's length and width.
#[derive(Clone, Debug)]
pub enum FusePath<T: Real> {
    /// Pointwise conv, then nearest-neighbour upsampling by `factor`.
    Up { conv: ConvBn<T>, factor: usize, source_len: Option<usize> },
    /// Chain of strided convs, each halving the length.
    Down { convs: Vec<ConvBn<T>> },
}

impl<T: Real> FusePath<T> {
    fn forward(&mut self, x: &Tensor<T>, target_len: usize, mode: NormMode) -> Result<Tensor<T>> {
        match self {
            FusePath::Up { conv, factor, source_len } => {
                let y = upsample1d(&conv.forward(x, mode)?, *factor)?;
                *source_len = Some(x.length());
                crop_length(&y, target_len)
            }
            FusePath::Down { convs } => {
                let mut h = x.clone();
                for c in convs.iter_mut() {
                    h = c.forward(&h, mode)?;
                }
                Ok(h)
            }
        }
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            FusePath::Up { conv, factor, source_len } => {
                let source_len = source_len.ok_or_else(|| missing_cache(&conv.name))?;
                let padded = pad_length(grad, source_len * *factor);
                conv.backward(&upsample1d_backward(&padded, *factor)?)
            }
            FusePath::Down { convs } => {
                let mut g = grad.clone();
                for c in convs.iter_mut().rev() {
                    g = c.backward(&g)?;
                }
                Ok(g)
            }
        }
    }

    fn layers(&self) -> Vec<&ConvBn<T>> {
        match self {
            FusePath::Up { conv, .. } => vec![conv],
            FusePath::Down { convs } => convs.iter().collect(),
        }
    }

    fn layers_mut(&mut self) -> Vec<&mut ConvBn<T>> {
        match self {
            FusePath::Up { conv, .. } => vec![conv],
            FusePath::Down { convs } => convs.iter_mut().collect(),
        }
    }
}

fn crop_length<T: Real>(x: &Tensor<T>, len: usize) -> Result<Tensor<T>> {
    let [b, l, c] = x.shape();
    if l == len {
        return Ok(x.clone());
    }
    if l < len {
        return Err(shape_err!("cannot crop length {l} to {len}"));
    }
    Ok(Tensor::from_fn([b, len, c], |n, i, ch| x.at(n, i, ch)))
}

fn pad_length<T: Real>(x: &Tensor<T>, len: usize) -> Tensor<T> {
    let [b, l, c] = x.shape();
    Tensor::from_fn([b, len, c], |n, i, ch| if i < l { x.at(n, i, ch) } else { T::zero() })
}

/// For every target branch `t`: `relu(x_t + sum_{j != t} path_{t,j}(x_j))`.
#[derive(Clone, Debug)]
pub struct Fusion<T: Real> {
    /// `paths[t][j]`, `None` on the diagonal.
    pub paths: Vec<Vec<Option<FusePath<T>>>>,
    outputs: Vec<Tensor<T>>,
}

impl<T: Real> Fusion<T> {
    pub fn new(name: &str, widths: &[usize], kernel_size: usize, init: &mut Init) -> Self {
        let n = widths.len();
        let paths = (0..n)
            .map(|t| {
                (0..n)
                    .map(|j| {
                        let prefix = format!("{name}.t{t}.s{j}");
                        if j > t {
                            Some(FusePath::Up {
                                conv: ConvBn::new(&prefix, 1, widths[j], widths[t], 1, false, init),
                                factor: 1 << (j - t),
                                source_len: None,
                            })
                        } else if j < t {
                            let steps = t - j;
                            let convs = (0..steps)
                                .map(|s| {
                                    let last = s + 1 == steps;
                                    let c_out = if last { widths[t] } else { widths[j] };
                                    ConvBn::new(&format!("{prefix}.{s}"), kernel_size, widths[j], c_out, 2, !last, init)
                                })
                                .collect();
                            Some(FusePath::Down { convs })
                        } else {
                            None
                        }
                    })
                    .collect()
            })
            .collect();
        Self { paths, outputs: Vec::new() }
    }

    pub fn forward(&mut self, branches: &[Tensor<T>], mode: NormMode) -> Result<Vec<Tensor<T>>> {
        if branches.len() != self.paths.len() {
            return Err(shape_err!(
                "fusion built for {} branches got {}",
                self.paths.len(),
                branches.len()
            ));
        }
        for pair in branches.windows(2) {
            if pair[1].length() != pair[0].length().div_ceil(2) {
                return Err(shape_err!(
                    "branch lengths {} and {} are not in a halving relation",
                    pair[0].length(),
                    pair[1].length()
                ));
            }
        }
        let mut out = Vec::with_capacity(branches.len());
        for (t, row) in self.paths.iter_mut().enumerate() {
            let target_len = branches[t].length();
            let mut acc = branches[t].clone();
            for (j, path) in row.iter_mut().enumerate() {
                if let Some(p) = path {
                    acc.add_assign(&p.forward(&branches[j], target_len, mode)?)?;
                }
            }
            out.push(relu_forward(&acc));
        }
        if mode == NormMode::Train {
            self.outputs = out.clone();
        }
        Ok(out)
    }

    pub fn backward(&mut self, grads: &[Tensor<T>]) -> Result<Vec<Tensor<T>>> {
        let outputs = std::mem::take(&mut self.outputs);
        if outputs.len() != grads.len() {
            return Err(missing_cache("fusion"));
        }
        let mut grad_in: Vec<Tensor<T>> = outputs.iter().map(|o| Tensor::zeros(o.shape())).collect();
        for (t, row) in self.paths.iter_mut().enumerate() {
            let g = relu_backward(&grads[t], &outputs[t])?;
            for (j, path) in row.iter_mut().enumerate() {
                if let Some(p) = path {
                    grad_in[j].add_assign(&p.backward(&g)?)?;
                }
            }
            grad_in[t].add_assign(&g)?;
        }
        Ok(grad_in)
    }

    fn layers(&self) -> impl Iterator<Item = &ConvBn<T>> {
        self.paths.iter().flatten().flatten().flat_map(|p| p.layers())
    }
}

impl<T: Real> Params<T> for Fusion<T> {
    fn params<'a>(&'a self, out: &mut Vec<&'a ParamSlot<T>>) {
        for l in self.layers() {
            l.params(out);
        }
    }
    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamSlot<T>>) {
        for p in self.paths.iter_mut().flatten().flatten() {
            for l in p.layers_mut() {
                l.params_mut(out);
            }
        }
    }
    fn norms<'a>(&'a self, out: &mut Vec<&'a BatchNorm<T>>) {
        for l in self.layers() {
            l.norms(out);
        }
    }
    fn norms_mut<'a>(&'a mut self, out: &mut Vec<&'a mut BatchNorm<T>>) {
        for p in self.paths.iter_mut().flatten().flatten() {
            for l in p.layers_mut() {
                l.norms_mut(out);
            }
        }
    }
}
