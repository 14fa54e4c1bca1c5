use super::layers::{missing_cache, BatchNorm, ConvBn, Dense, Init, Params};
use crate::error::{shape_err, Result};
use crate::tensor::{global_avg_pool1d, global_avg_pool1d_backward, NormMode, ParamSlot, Real, Tensor};

/// Per branch: strided conv, pointwise conv to twice the width, global
/// average pool. The pooled descriptors are concatenated and classified.
#[derive(Clone, Debug)]
pub struct Head<T: Real> {
    pub branches: Vec<[ConvBn<T>; 2]>,
    pub classifier: Dense<T>,
    pooled_lengths: Vec<usize>,
}

impl<T: Real> Head<T> {
    pub fn new(name: &str, widths: &[usize], kernel_size: usize, num_classes: usize, init: &mut Init) -> Self {
        let branches = widths
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                [
                    ConvBn::new(&format!("{name}.b{i}.down"), kernel_size, c, c, 2, true, init),
                    ConvBn::new(&format!("{name}.b{i}.widen"), 1, c, 2 * c, 1, true, init),
                ]
            })
            .collect();
        let total: usize = widths.iter().map(|c| 2 * c).sum();
        Self {
            branches,
            classifier: Dense::new(&format!("{name}.classifier"), total, num_classes, init),
            pooled_lengths: Vec::new(),
        }
    }

    pub fn forward(&mut self, inputs: &[Tensor<T>], mode: NormMode) -> Result<Tensor<T>> {
        if inputs.len() != self.branches.len() {
            return Err(shape_err!(
                "head built for {} branches got {}",
                self.branches.len(),
                inputs.len()
            ));
        }
        let mut pooled = Vec::with_capacity(inputs.len());
        let mut lengths = Vec::with_capacity(inputs.len());
        for ([down, widen], x) in self.branches.iter_mut().zip(inputs) {
            let h = widen.forward(&down.forward(x, mode)?, mode)?;
            lengths.push(h.length());
            pooled.push(global_avg_pool1d(&h)?);
        }
        let refs: Vec<&Tensor<T>> = pooled.iter().collect();
        let features = Tensor::concat_channels(&refs)?;
        if mode == NormMode::Train {
            self.pooled_lengths = lengths;
        }
        self.classifier.forward(&features, mode)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let lengths = std::mem::take(&mut self.pooled_lengths);
        if lengths.len() != self.branches.len() {
            return Err(missing_cache("head"));
        }
        let g = self.classifier.backward(grad)?;
        let widths: Vec<usize> = self.branches.iter().map(|[_, w]| w.out_channels()).collect();
        let parts = g.split_channels(&widths)?;
        self.branches
            .iter_mut()
            .zip(parts)
            .zip(lengths)
            .map(|(([down, widen], gp), len)| {
                let g = widen.backward(&global_avg_pool1d_backward(&gp, len)?)?;
                down.backward(&g)
            })
            .collect()
    }
}

impl<T: Real> Params<T> for Head<T> {
    fn params<'a>(&'a self, out: &mut Vec<&'a ParamSlot<T>>) {
        for l in self.branches.iter().flatten() {
            l.params(out);
        }
        self.classifier.params(out);
    }
    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamSlot<T>>) {
        for l in self.branches.iter_mut().flatten() {
            l.params_mut(out);
        }
        self.classifier.params_mut(out);
    }
    fn norms<'a>(&'a self, out: &mut Vec<&'a BatchNorm<T>>) {
        for l in self.branches.iter().flatten() {
            l.norms(out);
        }
    }
    fn norms_mut<'a>(&'a mut self, out: &mut Vec<&'a mut BatchNorm<T>>) {
        for l in self.branches.iter_mut().flatten() {
            l.norms_mut(out);
        }
    }
}
