//! The multi-scale fusion classifier with squeeze-and-excitation attention.
//!
//! Layout:
//!
//! ```text
//! stem:    conv(k) -> conv(k)                         [b, L, C]
//! stage 0: bottleneck x blocks, chained; each output is a branch
//!          (lengths L/2, L/4, ...), then fusion across branches
//! stage s: bottleneck i consumes fused branch i, then fusion
//! head:    per branch conv(k, /2) -> conv(1, 2C) -> pool; concat; dense
//! ```

mod bottleneck;
mod fusion;
mod head;
mod layers;
mod se;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use bottleneck::{Bottleneck, BottleneckShape};
pub use fusion::{FusePath, Fusion};
pub use head::Head;
pub use layers::{BatchNorm, Conv, ConvBn, Dense, Init, Params, BN_EPS, BN_MOMENTUM};
pub use se::{se_hidden, SeBlock};

use crate::error::{invalid, Error, Result};
use crate::tensor::checkpoint::{BlobKind, Checkpoint, NamedBlob};
use crate::tensor::{softmax, NormMode, ParamSlot, Real, Tensor};

/// `(block, reduction ratio, repetition)` for each row of the published
/// hyperparameter grid, in table order.
pub const HYPERPARAMETER_GRID: [(usize, usize, usize); 16] = [
    (4, 1, 3),
    (3, 1, 3),
    (2, 1, 3),
    (1, 1, 3),
    (4, 1, 2),
    (3, 1, 2),
    (2, 1, 2),
    (1, 1, 2),
    (4, 1, 1),
    (3, 1, 1),
    (2, 1, 1),
    (1, 1, 1),
    (4, 4, 2),
    (4, 8, 2),
    (4, 12, 2),
    (4, 16, 2),
];

/// Kernel sizes of the published kernel-size sweep.
pub const KERNEL_SIZES: [usize; 8] = [3, 5, 7, 8, 9, 11, 13, 15];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kernel_size: usize,
    pub blocks: usize,
    pub reduction_ratio: usize,
    pub repetition: usize,
    pub num_classes: usize,
    /// Width of every branch and bottleneck.
    pub base_filters: usize,
    pub se_enabled: bool,
    pub input_length: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kernel_size: 9,
            blocks: 4,
            reduction_ratio: 1,
            repetition: 2,
            num_classes: 24,
            base_filters: 32,
            se_enabled: true,
            input_length: crate::signal::FRAME_LEN,
        }
    }
}

impl ModelConfig {
    pub fn with_classes(self, num_classes: usize) -> Self {
        Self { num_classes, ..self }
    }

    pub fn with_grid_row(self, (blocks, reduction_ratio, repetition): (usize, usize, usize)) -> Self {
        Self {
            blocks,
            reduction_ratio,
            repetition,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_size < 3 {
            return Err(invalid!("kernel size must be >= 3, got {}", self.kernel_size));
        }
        if self.blocks == 0 || self.repetition == 0 {
            return Err(invalid!("block and repetition must be >= 1"));
        }
        if self.reduction_ratio == 0 {
            return Err(invalid!("reduction ratio must be >= 1"));
        }
        if self.num_classes < 2 {
            return Err(invalid!("need at least 2 classes"));
        }
        if self.base_filters == 0 || self.input_length < 2 {
            return Err(invalid!("base filters and input length must be positive"));
        }
        if self.blocks > 4 || self.repetition > 3 {
            log::warn!(
                "block={} repetition={} lies outside the explored grid",
                self.blocks,
                self.repetition
            );
        }
        if self.se_enabled && !self.base_filters.is_multiple_of(self.reduction_ratio) {
            log::warn!(
                "{} channels are not divisible by r={}; squeeze width rounds down to {}",
                self.base_filters,
                self.reduction_ratio,
                se_hidden(self.base_filters, self.reduction_ratio)
            );
        }
        Ok(())
    }

    pub fn branch_widths(&self) -> Vec<usize> {
        vec![self.base_filters; self.blocks]
    }

    /// Branch lengths after stage `stage` (0-based).
    pub fn branch_lengths(&self, stage: usize) -> Vec<usize> {
        let mut len = self.input_length;
        let mut first = Vec::with_capacity(self.blocks);
        for _ in 0..self.blocks {
            len = len.div_ceil(2);
            first.push(len);
        }
        first
            .into_iter()
            .map(|l| (0..stage).fold(l, |l, _| l.div_ceil(2)))
            .collect()
    }

    /// Trainable scalars, counted without building the network.
    pub fn param_count(&self) -> usize {
        let conv_bn = |k: usize, ci: usize, co: usize| k * ci * co + co + 2 * co;
        let dense = |n: usize, m: usize| n * m + m;
        let (k, c) = (self.kernel_size, self.base_filters);
        let mut total = conv_bn(k, 2, c) + conv_bn(k, c, c);
        let mut block = conv_bn(1, c, c) + conv_bn(k, c, c) + conv_bn(1, c, c) + conv_bn(1, c, c);
        if self.se_enabled {
            let h = se_hidden(c, self.reduction_ratio);
            block += dense(c, h) + dense(h, c);
        }
        let n = self.blocks;
        let mut fusion = 0;
        for t in 0..n {
            for j in 0..n {
                fusion += match j.cmp(&t) {
                    std::cmp::Ordering::Greater => conv_bn(1, c, c),
                    std::cmp::Ordering::Less => (t - j) * conv_bn(k, c, c),
                    std::cmp::Ordering::Equal => 0,
                };
            }
        }
        if n == 1 {
            fusion = 0;
        }
        total += self.repetition * (n * block + fusion);
        total += n * (conv_bn(k, c, c) + conv_bn(1, c, 2 * c));
        total + dense(n * 2 * c, self.num_classes)
    }
}

#[derive(Clone, Debug)]
struct Stage<T: Real> {
    blocks: Vec<Bottleneck<T>>,
    fusion: Option<Fusion<T>>,
    chained: bool,
}

impl<T: Real> Stage<T> {
    fn forward(&mut self, inputs: &[Tensor<T>], mode: NormMode) -> Result<Vec<Tensor<T>>> {
        let mut branches = Vec::with_capacity(self.blocks.len());
        for (i, block) in self.blocks.iter_mut().enumerate() {
            let x = match (self.chained, i) {
                (true, 0) => &inputs[0],
                (true, _) => &branches[i - 1],
                (false, _) => &inputs[i],
            };
            let y = block.forward(x, mode)?;
            branches.push(y);
        }
        match &mut self.fusion {
            Some(f) => f.forward(&branches, mode),
            None => Ok(branches),
        }
    }

    fn backward(&mut self, grads: Vec<Tensor<T>>) -> Result<Vec<Tensor<T>>> {
        let grads = match &mut self.fusion {
            Some(f) => f.backward(&grads)?,
            None => grads,
        };
        if self.chained {
            let mut carry: Option<Tensor<T>> = None;
            for (block, mut g) in self.blocks.iter_mut().zip(grads).rev() {
                if let Some(c) = carry.take() {
                    g.add_assign(&c)?;
                }
                carry = Some(block.backward(&g)?);
            }
            Ok(vec![carry.expect("at least one block")])
        } else {
            self.blocks
                .iter_mut()
                .zip(grads)
                .map(|(b, g)| b.backward(&g))
                .collect()
        }
    }
}

impl<T: Real> Params<T> for Stage<T> {
    fn params<'a>(&'a self, out: &mut Vec<&'a ParamSlot<T>>) {
        self.blocks.iter().for_each(|b| b.params(out));
        if let Some(f) = &self.fusion {
            f.params(out);
        }
    }
    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamSlot<T>>) {
        self.blocks.iter_mut().for_each(|b| b.params_mut(out));
        if let Some(f) = &mut self.fusion {
            f.params_mut(out);
        }
    }
    fn norms<'a>(&'a self, out: &mut Vec<&'a BatchNorm<T>>) {
        self.blocks.iter().for_each(|b| b.norms(out));
        if let Some(f) = &self.fusion {
            f.norms(out);
        }
    }
    fn norms_mut<'a>(&'a mut self, out: &mut Vec<&'a mut BatchNorm<T>>) {
        self.blocks.iter_mut().for_each(|b| b.norms_mut(out));
        if let Some(f) = &mut self.fusion {
            f.norms_mut(out);
        }
    }
}

/// The full classifier. `T = f32` for training; `f64` for verification.
#[derive(Clone, Debug)]
pub struct SeMsfn<T: Real = f32> {
    config: ModelConfig,
    stem: [ConvBn<T>; 2],
    stages: Vec<Stage<T>>,
    head: Head<T>,
}

impl<T: Real> SeMsfn<T> {
    /// He-uniform weights, zero biases, unit gains; deterministic per seed.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init = Init::new(ChaCha8Rng::seed_from_u64(seed));
        let init = &mut init;
        let (k, c) = (config.kernel_size, config.base_filters);
        let widths = config.branch_widths();
        let stem = [
            ConvBn::new("stem.0", k, 2, c, 1, true, init),
            ConvBn::new("stem.1", k, c, c, 1, true, init),
        ];
        let reduction = config.se_enabled.then_some(config.reduction_ratio);
        let stages = (0..config.repetition)
            .map(|s| {
                let blocks = (0..config.blocks)
                    .map(|i| {
                        let c_in = match (s, i) {
                            (0, 0) => c,
                            (0, _) => widths[i - 1],
                            _ => widths[i],
                        };
                        let shape = BottleneckShape {
                            c_in,
                            c_mid: c,
                            c_out: widths[i],
                            kernel_size: k,
                            reduction,
                        };
                        Bottleneck::new(&format!("stage{s}.block{i}"), &shape, init)
                    })
                    .collect();
                let fusion = (config.blocks > 1).then(|| Fusion::new(&format!("stage{s}.fuse"), &widths, k, init));
                Stage {
                    blocks,
                    fusion,
                    chained: s == 0,
                }
            })
            .collect();
        let head = Head::new("head", &widths, k, config.num_classes, init);
        Ok(Self {
            config,
            stem,
            stages,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Logits `[b, 1, num_classes]` for inputs `[b, length, 2]`.
    pub fn forward(&mut self, x: &Tensor<T>, mode: NormMode) -> Result<Tensor<T>> {
        if x.channels() != 2 || x.length() != self.config.input_length {
            return Err(crate::error::shape_err!(
                "model expects [b, {}, 2] inputs, got {:?}",
                self.config.input_length,
                x.shape()
            ));
        }
        let h = self.stem[0].forward(x, mode)?;
        let h = self.stem[1].forward(&h, mode)?;
        let mut branches = vec![h];
        for stage in &mut self.stages {
            branches = stage.forward(&branches, mode)?;
        }
        self.head.forward(&branches, mode)
    }

    /// Branch tensors after each stage, for shape inspection.
    pub fn trace_branches(&mut self, x: &Tensor<T>) -> Result<Vec<Vec<[usize; 3]>>> {
        let h = self.stem[0].forward(x, NormMode::Infer)?;
        let h = self.stem[1].forward(&h, NormMode::Infer)?;
        let mut branches = vec![h];
        let mut shapes = Vec::new();
        for stage in &mut self.stages {
            branches = stage.forward(&branches, NormMode::Infer)?;
            shapes.push(branches.iter().map(|b| b.shape()).collect());
        }
        Ok(shapes)
    }

    /// Accumulates parameter gradients for the last train-mode forward and
    /// returns the gradient with respect to the input.
    pub fn backward(&mut self, grad_logits: &Tensor<T>) -> Result<Tensor<T>> {
        let mut grads = self.head.backward(grad_logits)?;
        for stage in self.stages.iter_mut().rev() {
            grads = stage.backward(grads)?;
        }
        let g = self.stem[1].backward(&grads[0])?;
        self.stem[0].backward(&g)
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut_vec() {
            p.zero_grad();
        }
    }

    pub fn params_vec(&self) -> Vec<&ParamSlot<T>> {
        let mut v = Vec::new();
        self.params(&mut v);
        v
    }

    pub fn params_mut_vec(&mut self) -> Vec<&mut ParamSlot<T>> {
        let mut v = Vec::new();
        self.params_mut(&mut v);
        v
    }

    pub fn norms_vec(&self) -> Vec<&BatchNorm<T>> {
        let mut v = Vec::new();
        self.norms(&mut v);
        v
    }

    /// Number of trainable scalars in the built network.
    pub fn param_count(&self) -> usize {
        self.params_vec().iter().map(|p| p.numel()).sum()
    }

    /// Class probabilities `[b, 1, K]` in inference mode.
    pub fn predict_proba(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        softmax(&self.forward(x, NormMode::Infer)?)
    }

    pub fn predict(&mut self, x: &Tensor<T>) -> Result<Vec<usize>> {
        let logits = self.forward(x, NormMode::Infer)?;
        Ok((0..logits.batch()).map(|b| argmax(logits.sample(b))).collect())
    }

    /// Copies every parameter and running statistic from a model with the
    /// same configuration, converting precision.
    pub fn copy_from<U: Real>(&mut self, other: &SeMsfn<U>) -> Result<()> {
        if self.config != other.config {
            return Err(Error::Incompatible("configurations differ".into()));
        }
        for (dst, src) in self.params_mut_vec().into_iter().zip(other.params_vec()) {
            let values: Vec<T> = src.value.data().iter().map(|v| T::lit(v.as_f64())).collect();
            dst.set_value(&values)?;
        }
        let mut dst_norms = Vec::new();
        self.norms_mut(&mut dst_norms);
        for (dst, src) in dst_norms.into_iter().zip(other.norms_vec()) {
            dst.stats.mean = src.stats.mean.iter().map(|v| T::lit(v.as_f64())).collect();
            dst.stats.var = src.stats.var.iter().map(|v| T::lit(v.as_f64())).collect();
        }
        Ok(())
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl<T: Real> Params<T> for SeMsfn<T> {
    fn params<'a>(&'a self, out: &mut Vec<&'a ParamSlot<T>>) {
        self.stem.iter().for_each(|l| l.params(out));
        self.stages.iter().for_each(|s| s.params(out));
        self.head.params(out);
    }
    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut ParamSlot<T>>) {
        self.stem.iter_mut().for_each(|l| l.params_mut(out));
        self.stages.iter_mut().for_each(|s| s.params_mut(out));
        self.head.params_mut(out);
    }
    fn norms<'a>(&'a self, out: &mut Vec<&'a BatchNorm<T>>) {
        self.stem.iter().for_each(|l| l.norms(out));
        self.stages.iter().for_each(|s| s.norms(out));
        self.head.norms(out);
    }
    fn norms_mut<'a>(&'a mut self, out: &mut Vec<&'a mut BatchNorm<T>>) {
        self.stem.iter_mut().for_each(|l| l.norms_mut(out));
        self.stages.iter_mut().for_each(|s| s.norms_mut(out));
        self.head.norms_mut(out);
    }
}

const CHECKPOINT_KIND: &str = "se-msfn";

impl SeMsfn<f32> {
    /// Serializes parameters and running statistics. `extra` is stored in
    /// the header next to the configuration.
    pub fn to_checkpoint(&self, extra: serde_json::Value) -> Checkpoint {
        let mut blobs: Vec<NamedBlob> = self
            .params_vec()
            .into_iter()
            .map(|p| NamedBlob {
                name: p.name.clone(),
                kind: BlobKind::Parameter,
                shape: p.value.shape().to_vec(),
                values: p.value.data().to_vec(),
            })
            .collect();
        for bn in self.norms_vec() {
            for (suffix, values) in [("running_mean", &bn.stats.mean), ("running_var", &bn.stats.var)] {
                blobs.push(NamedBlob {
                    name: format!("{}.{suffix}", bn.name),
                    kind: BlobKind::Buffer,
                    shape: vec![values.len()],
                    values: values.clone(),
                });
            }
        }
        Checkpoint {
            header: serde_json::json!({
                "model": CHECKPOINT_KIND,
                "config": self.config,
                "extra": extra,
            }),
            param_count: self.param_count() as u64,
            blobs,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.header.get("model").and_then(|m| m.as_str()) != Some(CHECKPOINT_KIND) {
            return Err(Error::Incompatible("checkpoint does not hold this model".into()));
        }
        let config: ModelConfig = serde_json::from_value(
            ckpt.header
                .get("config")
                .cloned()
                .ok_or_else(|| Error::Incompatible("checkpoint header lacks a config".into()))?,
        )?;
        let mut model = Self::new(config, 0)?;
        if model.param_count() as u64 != ckpt.param_count {
            return Err(Error::Incompatible(format!(
                "header declares {} parameters, configuration builds {}",
                ckpt.param_count,
                model.param_count()
            )));
        }
        let lookup = |name: &str, kind: BlobKind, len: usize| -> Result<&NamedBlob> {
            let blob = ckpt
                .blob(name)
                .ok_or_else(|| Error::Incompatible(format!("checkpoint lacks `{name}`")))?;
            if blob.kind != kind || blob.values.len() != len {
                return Err(Error::Incompatible(format!("blob `{name}` has the wrong kind or size")));
            }
            Ok(blob)
        };
        for p in model.params_mut_vec() {
            let blob = lookup(&p.name, BlobKind::Parameter, p.numel())?;
            if blob.shape != p.value.shape() {
                return Err(Error::Incompatible(format!("blob `{}` has shape {:?}", p.name, blob.shape)));
            }
            p.set_value(&blob.values)?;
        }
        let mut norms = Vec::new();
        model.norms_mut(&mut norms);
        for bn in norms {
            let c = bn.stats.mean.len();
            bn.stats.mean = lookup(&format!("{}.running_mean", bn.name), BlobKind::Buffer, c)?.values.clone();
            bn.stats.var = lookup(&format!("{}.running_var", bn.name), BlobKind::Buffer, c)?.values.clone();
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path, extra: serde_json::Value) -> Result<()> {
        self.to_checkpoint(extra).save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}
