//! Small learnable datasets and stub classifiers for fast training tests.

#![allow(dead_code)]

use modclass::dataset::FrameSet;
use modclass::model::ModelConfig;
use modclass::signal::{IqFrame, ModulationMode};
use modclass::tensor::Tensor;
use modclass::train::Classifier;
use modclass::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LENGTH: usize = 64;
pub const CLASSES: [ModulationMode; 3] = [ModulationMode::Bpsk, ModulationMode::Qpsk, ModulationMode::Fm];
pub const SNRS: [i32; 2] = [0, 10];

/// Class `c` is a complex tone at `c + 1` cycles per frame with random phase,
/// in noise whose level depends on the SNR tag.
pub fn tone_set(per_cell: usize, seed: u64) -> FrameSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::new();
    for (c, &mode) in CLASSES.iter().enumerate() {
        for &snr in &SNRS {
            let sigma = 10f32.powf(-(snr as f32) / 20.0) * 0.5;
            for _ in 0..per_cell {
                let phase: f32 = rng.gen_range(0.0..std::f32::consts::TAU);
                let w = std::f32::consts::TAU * (c + 1) as f32 / LENGTH as f32;
                let (i, q) = (0..LENGTH)
                    .map(|n| {
                        let a = w * n as f32 + phase;
                        (a.cos() + sigma * rng.gen_range(-1.0..1.0f32), a.sin() + sigma * rng.gen_range(-1.0..1.0f32))
                    })
                    .unzip();
                frames.push(IqFrame { i_samples: i, q_samples: q, label: mode, snr_db: snr });
            }
        }
    }
    FrameSet { classes: CLASSES.to_vec(), frames }
}

pub fn tiny_model() -> ModelConfig {
    ModelConfig {
        kernel_size: 3,
        blocks: 1,
        reduction_ratio: 1,
        repetition: 1,
        num_classes: CLASSES.len(),
        base_filters: 8,
        se_enabled: true,
        input_length: LENGTH,
    }
}

/// Frames whose first I sample spells out the label, for stub classifiers.
pub fn labelled_set(per_cell: usize) -> FrameSet {
    let mut frames = Vec::new();
    for (c, &mode) in CLASSES.iter().enumerate() {
        for &snr in &SNRS {
            for k in 0..per_cell {
                let mut i_samples = vec![k as f32; 4];
                i_samples[0] = c as f32;
                frames.push(IqFrame { i_samples, q_samples: vec![0.0; 4], label: mode, snr_db: snr });
            }
        }
    }
    FrameSet { classes: CLASSES.to_vec(), frames }
}

/// Reads the label from the input, then lies about it on a fixed fraction of
/// frames (chosen by hashing the frame's serial number and the stub's seed).
#[derive(Clone, Debug)]
pub struct Stub {
    pub classes: usize,
    pub error_rate: f64,
    pub seed: u64,
    /// Always answer this class instead.
    pub constant: Option<usize>,
}

impl Stub {
    pub fn perfect() -> Self {
        Self { classes: CLASSES.len(), error_rate: 0.0, seed: 0, constant: None }
    }
}

impl Classifier for Stub {
    fn num_classes(&self) -> usize {
        self.classes
    }

    fn predict_proba(&mut self, x: &Tensor) -> Result<Tensor> {
        let k = self.classes;
        let mut out = Tensor::zeros([x.batch(), 1, k]);
        for n in 0..x.batch() {
            let truth = x.at(n, 0, 0) as usize;
            let serial = x.at(n, 1, 0) as u64 * 131 + truth as u64 * 7 + x.at(n, 0, 0).to_bits() as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(serial ^ self.seed.wrapping_mul(0x9E37_79B9));
            let class = match self.constant {
                Some(c) => c,
                None if rng.gen_bool(self.error_rate) => (truth + rng.gen_range(1..k)) % k,
                None => truth,
            };
            let row = out.sample_mut(n);
            row.fill(0.1 / (k - 1) as f32);
            row[class] = 0.9;
        }
        Ok(out)
    }
}
