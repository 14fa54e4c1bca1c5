//! Finite-difference harness shared by the gradient and acceptance suites.
//!
//! Each case builds the same layer at f32 and f64 (the f64 copy takes the
//! rounded f32 weights), draws a random input and a random linear read-out
//! `r`, and compares the analytic gradient of `sum(r * y)` with respect to the
//! input and every parameter against central differences of the f64 copy.

#![allow(dead_code)]

use modclass::model::{
    Bottleneck, BottleneckShape, ConvBn, Dense, Fusion, Head, Init, ModelConfig, Params, SeBlock, SeMsfn,
};
use modclass::model::{BatchNorm, Conv};
use modclass::tensor::{
    global_avg_pool1d, global_avg_pool1d_backward, grad_check, relu_backward, relu_forward, sigmoid_backward,
    sigmoid_forward, softmax_cross_entropy, upsample1d, upsample1d_backward, GradCheck, NormMode, ParamSlot, Real,
    Tensor,
};
use modclass::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const F32_TOLERANCE: f64 = 1e-3;
pub const F64_TOLERANCE: f64 = 1e-6;
pub const TRIALS: u64 = 100;
/// Partials smaller than this fraction of the largest probed one are compared
/// in absolute terms; their true value is zero or lost to cancellation.
pub const SCALE_FLOOR: f64 = 1e-2;
/// Coordinates probed per trial (all of them when fewer exist).
pub const PROBES: usize = 24;

/// A differentiable unit with a single tensor input and output.
pub trait Unit<T: Real> {
    fn fwd(&mut self, x: &Tensor<T>) -> Result<Tensor<T>>;
    fn bwd(&mut self, g: &Tensor<T>) -> Result<Tensor<T>>;
    fn slots(&self) -> Vec<&ParamSlot<T>> {
        Vec::new()
    }
    fn slots_mut(&mut self) -> Vec<&mut ParamSlot<T>> {
        Vec::new()
    }
}

fn collect<T: Real>(p: &impl Params<T>) -> Vec<&ParamSlot<T>> {
    let mut v = Vec::new();
    p.params(&mut v);
    v
}

fn collect_mut<T: Real>(p: &mut impl Params<T>) -> Vec<&mut ParamSlot<T>> {
    let mut v = Vec::new();
    p.params_mut(&mut v);
    v
}

macro_rules! layer_unit {
    ($ty:ident) => {
        impl<T: Real> Unit<T> for $ty<T> {
            fn fwd(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
                self.forward(x, NormMode::Train)
            }
            fn bwd(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
                self.backward(g)
            }
            fn slots(&self) -> Vec<&ParamSlot<T>> {
                collect(self)
            }
            fn slots_mut(&mut self) -> Vec<&mut ParamSlot<T>> {
                collect_mut(self)
            }
        }
    };
}

layer_unit!(Conv);
layer_unit!(BatchNorm);
layer_unit!(ConvBn);
layer_unit!(Dense);
layer_unit!(SeBlock);
layer_unit!(Bottleneck);

pub struct Relu<T>(Option<Tensor<T>>);
pub struct Sigmoid<T>(Option<Tensor<T>>);
pub struct Pool(usize);
pub struct Upsample(usize);

impl<T: Real> Unit<T> for Relu<T> {
    fn fwd(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = relu_forward(x);
        self.0 = Some(y.clone());
        Ok(y)
    }
    fn bwd(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        relu_backward(g, self.0.as_ref().unwrap())
    }
}

impl<T: Real> Unit<T> for Sigmoid<T> {
    fn fwd(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = sigmoid_forward(x);
        self.0 = Some(y.clone());
        Ok(y)
    }
    fn bwd(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        sigmoid_backward(g, self.0.as_ref().unwrap())
    }
}

impl<T: Real> Unit<T> for Pool {
    fn fwd(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.0 = x.length();
        global_avg_pool1d(x)
    }
    fn bwd(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        global_avg_pool1d_backward(g, self.0)
    }
}

impl<T: Real> Unit<T> for Upsample {
    fn fwd(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        upsample1d(x, self.0)
    }
    fn bwd(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        upsample1d_backward(g, self.0)
    }
}

/// Mean cross-entropy against fixed labels; output is the `[1, 1, 1]` loss.
pub struct CrossEntropy<T> {
    pub labels: Vec<usize>,
    grad: Option<Tensor<T>>,
}

impl<T: Real> Unit<T> for CrossEntropy<T> {
    fn fwd(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let out = softmax_cross_entropy(x, &self.labels)?;
        self.grad = Some(out.grad);
        Ok(Tensor::full([1, 1, 1], T::lit(out.loss)))
    }
    fn bwd(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let scale = g.data()[0];
        Ok(self.grad.as_ref().unwrap().map(|v| v * scale))
    }
}

/// Runs a multi-branch layer on one tensor: the input is the branches laid
/// end to end along the length axis, and so is the output.
fn split_lengths<T: Real>(x: &Tensor<T>, lengths: &[usize]) -> Vec<Tensor<T>> {
    let [b, total, c] = x.shape();
    assert_eq!(total, lengths.iter().sum::<usize>());
    let mut start = 0;
    lengths
        .iter()
        .map(|&len| {
            let t = Tensor::from_fn([b, len, c], |n, l, ch| x.at(n, start + l, ch));
            start += len;
            t
        })
        .collect()
}

fn join_lengths<T: Real>(parts: &[Tensor<T>]) -> Tensor<T> {
    let [b, _, c] = parts[0].shape();
    let total = parts.iter().map(|p| p.length()).sum();
    let offsets: Vec<usize> = parts
        .iter()
        .scan(0, |acc, p| {
            let o = *acc;
            *acc += p.length();
            Some(o)
        })
        .collect();
    Tensor::from_fn([b, total, c], |n, l, ch| {
        let i = offsets.iter().rposition(|&o| o <= l).unwrap();
        parts[i].at(n, l - offsets[i], ch)
    })
}

pub struct FusionUnit<T: Real> {
    pub fusion: Fusion<T>,
    pub lengths: Vec<usize>,
}

impl<T: Real> Unit<T> for FusionUnit<T> {
    fn fwd(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let out = self.fusion.forward(&split_lengths(x, &self.lengths), NormMode::Train)?;
        Ok(join_lengths(&out))
    }
    fn bwd(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let grads = self.fusion.backward(&split_lengths(g, &self.lengths))?;
        Ok(join_lengths(&grads))
    }
    fn slots(&self) -> Vec<&ParamSlot<T>> {
        collect(&self.fusion)
    }
    fn slots_mut(&mut self) -> Vec<&mut ParamSlot<T>> {
        collect_mut(&mut self.fusion)
    }
}

pub struct HeadUnit<T: Real> {
    pub head: Head<T>,
    pub lengths: Vec<usize>,
}

impl<T: Real> Unit<T> for HeadUnit<T> {
    fn fwd(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.head.forward(&split_lengths(x, &self.lengths), NormMode::Train)
    }
    fn bwd(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(join_lengths(&self.head.backward(g)?))
    }
    fn slots(&self) -> Vec<&ParamSlot<T>> {
        collect(&self.head)
    }
    fn slots_mut(&mut self) -> Vec<&mut ParamSlot<T>> {
        collect_mut(&mut self.head)
    }
}

/// The whole network followed by cross-entropy.
pub struct ModelUnit<T: Real> {
    pub model: SeMsfn<T>,
    pub loss: CrossEntropy<T>,
}

impl<T: Real> Unit<T> for ModelUnit<T> {
    fn fwd(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let logits = self.model.forward(x, NormMode::Train)?;
        self.loss.fwd(&logits)
    }
    fn bwd(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.loss.bwd(g)?;
        self.model.backward(&g)
    }
    fn slots(&self) -> Vec<&ParamSlot<T>> {
        self.model.params_vec()
    }
    fn slots_mut(&mut self) -> Vec<&mut ParamSlot<T>> {
        self.model.params_mut_vec()
    }
}

/// Outcome of one randomized trial.
#[derive(Clone, Copy, Debug)]
pub struct TrialError {
    /// f32 analytic gradient against the f64 numeric one.
    pub f32: f64,
    /// f64 analytic gradient against the f64 numeric one.
    pub f64: f64,
    pub checked: usize,
    /// Probes dropped because the loss has a kink there.
    pub skipped: usize,
}

impl TrialError {
    pub fn passed(&self) -> bool {
        self.f32 < F32_TOLERANCE && self.f64 < F64_TOLERANCE && self.skipped * 50 <= self.checked + self.skipped
    }
}

/// One trial: `a` and `b` must be the same layer at the two precisions.
pub fn check_pair<A: Unit<f32>, B: Unit<f64>>(
    a: &mut A,
    b: &mut B,
    input_shape: [usize; 3],
    rng: &mut ChaCha8Rng,
) -> Result<TrialError> {
    for (dst, src) in b.slots_mut().into_iter().zip(a.slots()) {
        let v: Vec<f64> = src.value.data().iter().map(|&x| x as f64).collect();
        dst.set_value(&v)?;
    }
    let x32 = Tensor::<f32>::from_fn(input_shape, |_, _, _| rng.gen_range(-1.0..1.0));
    let x64: Tensor<f64> = x32.cast();

    let y32 = a.fwd(&x32)?;
    let r64 = Tensor::<f64>::from_fn(y32.shape(), |_, _, _| rng.gen_range(-1.0..1.0f32) as f64);
    let r32: Tensor<f32> = r64.cast();
    a.slots_mut().into_iter().for_each(|p| p.zero_grad());
    let gx32 = a.bwd(&r32)?;
    let mut analytic32: Vec<f64> = gx32.data().iter().map(|&v| v as f64).collect();
    for p in a.slots() {
        analytic32.extend(p.grad.data().iter().map(|&v| v as f64));
    }

    b.fwd(&x64)?;
    b.slots_mut().into_iter().for_each(|p| p.zero_grad());
    let gx64 = b.bwd(&r64)?;
    let mut analytic64 = gx64.data().to_vec();
    let mut point = x64.data().to_vec();
    for p in b.slots() {
        analytic64.extend_from_slice(p.grad.data());
        point.extend_from_slice(p.value.data());
    }

    let n = point.len();
    let probes: Vec<usize> = if n <= PROBES {
        (0..n).collect()
    } else {
        (0..PROBES).map(|_| rng.gen_range(0..n)).collect()
    };
    let n_in = x64.len();
    let mut loss = |p: &[f64]| -> Result<f64> {
        let x = Tensor::new(input_shape, p[..n_in].to_vec())?;
        let mut offset = n_in;
        for slot in b.slots_mut() {
            let len = slot.numel();
            slot.set_value(&p[offset..offset + len])?;
            offset += len;
        }
        let y = b.fwd(&x)?;
        Ok(y.data().iter().zip(r64.data()).map(|(a, b)| a * b).sum())
    };
    let opts = GradCheck::new(F64_TOLERANCE).indices(probes).scale_floor(SCALE_FLOOR).skip_kinks(true);
    let r64 = grad_check(&mut loss, &point, &analytic64, &opts)?;
    let r32 = grad_check(&mut loss, &point, &analytic32, &opts)?;
    Ok(TrialError {
        f32: r32.max_rel_error,
        f64: r64.max_rel_error,
        checked: r64.checked,
        skipped: r64.skipped,
    })
}

fn init(seed: u64) -> Init {
    Init::new(ChaCha8Rng::seed_from_u64(seed))
}

/// A named family of randomized trials.
pub struct Case {
    pub name: &'static str,
    pub trial: fn(u64) -> Result<TrialError>,
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xA5A5)
}

fn conv_trial(seed: u64) -> Result<TrialError> {
    let mut rng = rng_for(seed);
    let (k, cin, cout, stride) = (rng.gen_range(1..=5), rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(1..=2));
    let l = rng.gen_range(k.max(2)..=12);
    let mut a = Conv::<f32>::new("c", k, cin, cout, stride, &mut init(seed));
    let mut b = Conv::<f64>::new("c", k, cin, cout, stride, &mut init(seed));
    check_pair(&mut a, &mut b, [rng.gen_range(1..=3), l, cin], &mut rng)
}

fn batchnorm_trial(seed: u64) -> Result<TrialError> {
    let mut rng = rng_for(seed);
    let c = rng.gen_range(1..=4);
    let mut a = BatchNorm::<f32>::new("bn", c);
    let mut b = BatchNorm::<f64>::new("bn", c);
    for p in a.slots_mut() {
        let v: Vec<f32> = (0..p.numel()).map(|_| rng.gen_range(0.5..1.5)).collect();
        p.set_value(&v)?;
    }
    check_pair(&mut a, &mut b, [rng.gen_range(2..=4), rng.gen_range(2..=8), c], &mut rng)
}

fn convbn_trial(seed: u64) -> Result<TrialError> {
    let mut rng = rng_for(seed);
    let (k, c) = (rng.gen_range(1..=5), rng.gen_range(1..=3));
    let mut a = ConvBn::<f32>::new("cb", k, c, c + 1, rng.gen_range(1..=2), true, &mut init(seed));
    let mut b = ConvBn::<f64>::new("cb", k, c, c + 1, a.conv.stride, true, &mut init(seed));
    check_pair(&mut a, &mut b, [2, rng.gen_range(4..=10), c], &mut rng)
}

fn dense_trial(seed: u64) -> Result<TrialError> {
    let mut rng = rng_for(seed);
    let (n, m) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
    let mut a = Dense::<f32>::new("d", n, m, &mut init(seed));
    let mut b = Dense::<f64>::new("d", n, m, &mut init(seed));
    check_pair(&mut a, &mut b, [rng.gen_range(1..=3), 1, n], &mut rng)
}

fn relu_trial(seed: u64) -> Result<TrialError> {
    let mut rng = rng_for(seed);
    check_pair(&mut Relu(None), &mut Relu(None), [2, rng.gen_range(1..=6), 2], &mut rng)
}

fn sigmoid_trial(seed: u64) -> Result<TrialError> {
    let mut rng = rng_for(seed);
    check_pair(&mut Sigmoid(None), &mut Sigmoid(None), [2, rng.gen_range(1..=6), 2], &mut rng)
}

fn pool_trial(seed: u64) -> Result<TrialError> {
    let mut rng = rng_for(seed);
    check_pair(&mut Pool(0), &mut Pool(0), [2, rng.gen_range(1..=9), 3], &mut rng)
}

fn upsample_trial(seed: u64) -> Result<TrialError> {
    let mut rng = rng_for(seed);
    let f = rng.gen_range(1..=3);
    check_pair(&mut Upsample(f), &mut Upsample(f), [2, rng.gen_range(1..=5), 2], &mut rng)
}

fn cross_entropy_trial(seed: u64) -> Result<TrialError> {
    let mut rng = rng_for(seed);
    let (b, k) = (rng.gen_range(1..=4), rng.gen_range(2..=6));
    let labels: Vec<usize> = (0..b).map(|_| rng.gen_range(0..k)).collect();
    let mut a = CrossEntropy { labels: labels.clone(), grad: None };
    let mut c = CrossEntropy { labels, grad: None };
    check_pair(&mut a, &mut c, [b, 1, k], &mut rng)
}

fn se_trial(seed: u64) -> Result<TrialError> {
    let mut rng = rng_for(seed);
    let (c, r) = (rng.gen_range(1..=6), rng.gen_range(1..=4));
    let mut a = SeBlock::<f32>::new("se", c, r, &mut init(seed));
    let mut b = SeBlock::<f64>::new("se", c, r, &mut init(seed));
    check_pair(&mut a, &mut b, [2, rng.gen_range(1..=7), c], &mut rng)
}

fn bottleneck_trial(seed: u64) -> Result<TrialError> {
    let mut rng = rng_for(seed);
    let shape = BottleneckShape {
        c_in: rng.gen_range(1..=3),
        c_mid: rng.gen_range(1..=3),
        c_out: rng.gen_range(1..=3),
        kernel_size: rng.gen_range(1..=5),
        reduction: rng.gen_bool(0.5).then(|| rng.gen_range(1..=2)),
    };
    let mut a = Bottleneck::<f32>::new("bt", &shape, &mut init(seed));
    let mut b = Bottleneck::<f64>::new("bt", &shape, &mut init(seed));
    check_pair(&mut a, &mut b, [2, rng.gen_range(4..=10), shape.c_in], &mut rng)
}

fn fusion_trial(seed: u64) -> Result<TrialError> {
    let mut rng = rng_for(seed);
    let branches = rng.gen_range(2..=3);
    let c = rng.gen_range(1..=3);
    let widths = vec![c; branches];
    let l0 = 4 << rng.gen_range(0..=1);
    let lengths: Vec<usize> = (0..branches).map(|i| l0 >> i).collect();
    let k = rng.gen_range(1..=4);
    let mut a = FusionUnit { fusion: Fusion::<f32>::new("f", &widths, k, &mut init(seed)), lengths: lengths.clone() };
    let mut b = FusionUnit { fusion: Fusion::<f64>::new("f", &widths, k, &mut init(seed)), lengths: lengths.clone() };
    check_pair(&mut a, &mut b, [2, lengths.iter().sum(), c], &mut rng)
}

fn head_trial(seed: u64) -> Result<TrialError> {
    let mut rng = rng_for(seed);
    let branches = rng.gen_range(1..=3);
    let c = rng.gen_range(1..=3);
    let widths = vec![c; branches];
    let lengths: Vec<usize> = (0..branches).map(|i| 16 >> i).collect();
    let (k, classes) = (rng.gen_range(1..=4), rng.gen_range(2..=4));
    let mut a = HeadUnit { head: Head::<f32>::new("h", &widths, k, classes, &mut init(seed)), lengths: lengths.clone() };
    let mut b = HeadUnit { head: Head::<f64>::new("h", &widths, k, classes, &mut init(seed)), lengths: lengths.clone() };
    check_pair(&mut a, &mut b, [2, lengths.iter().sum(), c], &mut rng)
}

/// Smallest configuration of the full network: one block, one stage, k = 3.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        kernel_size: 3,
        blocks: 1,
        reduction_ratio: 1,
        repetition: 1,
        num_classes: 4,
        base_filters: 4,
        se_enabled: true,
        input_length: 64,
    }
}

fn model_trial(seed: u64) -> Result<TrialError> {
    let mut rng = rng_for(seed);
    let config = tiny_config();
    let b = 2;
    let labels: Vec<usize> = (0..b).map(|_| rng.gen_range(0..config.num_classes)).collect();
    let mut m32 = ModelUnit {
        model: SeMsfn::<f32>::new(config, seed)?,
        loss: CrossEntropy { labels: labels.clone(), grad: None },
    };
    let mut m64 = ModelUnit {
        model: SeMsfn::<f64>::new(config, seed)?,
        loss: CrossEntropy { labels, grad: None },
    };
    check_pair(&mut m32, &mut m64, [b, config.input_length, 2], &mut rng)
}

pub fn layer_cases() -> Vec<Case> {
    vec![
        Case { name: "conv1d", trial: conv_trial },
        Case { name: "batchnorm1d", trial: batchnorm_trial },
        Case { name: "conv+bn+relu", trial: convbn_trial },
        Case { name: "dense", trial: dense_trial },
        Case { name: "relu", trial: relu_trial },
        Case { name: "sigmoid", trial: sigmoid_trial },
        Case { name: "global_avg_pool1d", trial: pool_trial },
        Case { name: "upsample1d", trial: upsample_trial },
        Case { name: "softmax_cross_entropy", trial: cross_entropy_trial },
        Case { name: "se_block", trial: se_trial },
        Case { name: "bottleneck", trial: bottleneck_trial },
        Case { name: "fusion", trial: fusion_trial },
        Case { name: "head", trial: head_trial },
    ]
}

pub fn model_case() -> Case {
    Case { name: "tiny end-to-end model", trial: model_trial }
}

/// Worst errors over `TRIALS` trials, with probe counts summed. Passing also
/// requires that at most 2% of probes were skipped.
pub fn run_case(case: &Case) -> Result<TrialError> {
    let mut worst = TrialError { f32: 0.0, f64: 0.0, checked: 0, skipped: 0 };
    for seed in 0..TRIALS {
        let e = (case.trial)(seed)?;
        worst.f32 = worst.f32.max(e.f32);
        worst.f64 = worst.f64.max(e.f64);
        worst.checked += e.checked;
        worst.skipped += e.skipped;
    }
    Ok(worst)
}
