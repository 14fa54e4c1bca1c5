use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::FrameSet;
use crate::error::{invalid, Result};
use crate::signal::IqFrame;
use crate::tensor::Tensor;
use crate::util::mix_seed;

/// A mini-batch: inputs are `[b, length, 2]` with channel 0 = I, 1 = Q.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub snr_tags: Vec<i32>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Interleaves I and Q of each frame into one `[b, length, 2]` tensor.
pub fn frames_to_tensor<'a>(frames: impl ExactSizeIterator<Item = &'a IqFrame>) -> Result<Tensor> {
    let b = frames.len();
    let mut data = Vec::new();
    let mut length = None;
    for f in frames {
        let n = *length.get_or_insert(f.len());
        if f.len() != n || f.q_samples.len() != n {
            return Err(invalid!("frames of different lengths in one batch"));
        }
        data.reserve(b * 2 * n);
        for (&i, &q) in f.i_samples.iter().zip(&f.q_samples) {
            data.push(i);
            data.push(q);
        }
    }
    Tensor::new([b, length.unwrap_or(0), 2], data)
}

pub struct BatchIter<'a> {
    set: &'a FrameSet,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl Iterator for BatchIter<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let idx = &self.order[self.pos..end];
        self.pos = end;
        let inputs = frames_to_tensor(idx.iter().map(|&i| &self.set.frames[i]))
            .expect("frame set has uniform lengths");
        Some(Batch {
            inputs,
            labels: idx.iter().map(|&i| self.set.label_index(i)).collect(),
            snr_tags: idx.iter().map(|&i| self.set.frames[i].snr_db).collect(),
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.order.len() - self.pos).div_ceil(self.batch_size);
        (n, Some(n))
    }
}

impl ExactSizeIterator for BatchIter<'_> {}

/// Batches over `indices`, permuted by `(shuffle_seed, epoch)` unless
/// `shuffle_seed` is `None`. The final short batch is kept.
pub fn batches<'a>(
    set: &'a FrameSet,
    indices: &[usize],
    batch_size: usize,
    shuffle_seed: Option<u64>,
    epoch: usize,
) -> Result<BatchIter<'a>> {
    if batch_size == 0 {
        return Err(invalid!("batch size must be >= 1"));
    }
    if indices.is_empty() {
        return Err(invalid!("cannot batch an empty index set"));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= set.frames.len()) {
        return Err(invalid!("index {bad} out of range for {} frames", set.frames.len()));
    }
    let mut order = indices.to_vec();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, &[epoch as u64])));
    }
    Ok(BatchIter {
        set,
        order,
        batch_size,
        pos: 0,
    })
}
