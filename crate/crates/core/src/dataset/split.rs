use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FrameSet;
use crate::error::{invalid, Result};
use crate::util::mix_seed;

/// Train/validation/test proportions as integer ratio parts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_parts: u32,
    pub val_parts: u32,
    pub test_parts: u32,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            train_parts: 8,
            val_parts: 1,
            test_parts: 1,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.train_parts == 0 || self.val_parts == 0 || self.test_parts == 0 {
            return Err(invalid!("split fractions must all be positive"));
        }
        Ok(())
    }

    /// (train, val, test) sizes for a cell of `n` frames. Validation and test
    /// are rounded to the nearest frame; train takes the remainder.
    pub fn cell_sizes(&self, n: usize) -> (usize, usize, usize) {
        if n < 3 {
            return (n, 0, 0);
        }
        let total = (self.train_parts + self.val_parts + self.test_parts) as usize;
        let share = |parts: u32| (2 * n * parts as usize + total) / (2 * total);
        let val = share(self.val_parts);
        let test = share(self.test_parts);
        (n - val - test, val, test)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified split over (label, SNR) cells. Each cell is shuffled with a
/// seed derived from the cell key, so the result does not depend on frame
/// order across cells.
pub fn split(set: &FrameSet, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let mut cells: BTreeMap<(usize, i32), Vec<usize>> = BTreeMap::new();
    for i in 0..set.frames.len() {
        cells
            .entry((set.label_index(i), set.frames[i].snr_db))
            .or_default()
            .push(i);
    }
    let mut out = Splits::default();
    for ((label, snr), mut idx) in cells {
        if idx.len() < 3 {
            log::warn!(
                "cell ({}, {snr} dB) has {} frames; all go to training",
                set.classes[label],
                idx.len()
            );
        }
        let seed = mix_seed(spec.seed, &[label as u64, snr as i64 as u64]);
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (tr, va, _) = spec.cell_sizes(idx.len());
        out.train.extend_from_slice(&idx[..tr]);
        out.val.extend_from_slice(&idx[tr..tr + va]);
        out.test.extend_from_slice(&idx[tr + va..]);
    }
    out.train.sort_unstable();
    out.val.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_sizes() {
        let s = SplitSpec::new(0);
        assert_eq!(s.cell_sizes(1000), (800, 100, 100));
        assert_eq!(s.cell_sizes(10), (8, 1, 1));
        assert_eq!(s.cell_sizes(2), (2, 0, 0));
        assert_eq!(s.cell_sizes(100), (80, 10, 10));
        for n in 3..500 {
            let (tr, va, te) = s.cell_sizes(n);
            assert_eq!(tr + va + te, n);
            assert!((tr as f64 - 0.8 * n as f64).abs() <= 1.0, "{n}");
        }
    }

    #[test]
    fn zero_part_rejected() {
        let spec = SplitSpec { val_parts: 0, ..SplitSpec::new(1) };
        assert!(split(&FrameSet::default(), &spec).is_err());
    }
}
