use std::path::Path;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::channel::add_awgn;
use super::modulate::{min_symbols, modulate, GENERATOR};
use super::{ImpairmentConfig, IqFrame, ModulationMode, FRAME_LEN};
use crate::dataset::{write_shard, CellCount, DatasetManifest, ShardEntry, MANIFEST_FILE};
use crate::error::{invalid, Result};
use crate::util::mix_seed;

/// One noisy frame plus the noise-free samples it was built from.
pub fn synth_frame_with_reference(
    mode: ModulationMode,
    snr_db: i32,
    imp: &ImpairmentConfig,
    seed: u64,
) -> Result<(IqFrame, Vec<Complex64>)> {
    let n_symbols = min_symbols(mode, imp)?;
    let mut clean = modulate(mode, mix_seed(seed, &[0]), n_symbols, imp)?;
    clean.truncate(FRAME_LEN);
    let noisy = add_awgn(&clean, snr_db as f64, mix_seed(seed, &[1]))?;
    let frame = IqFrame {
        i_samples: noisy.iter().map(|s| s.re as f32).collect(),
        q_samples: noisy.iter().map(|s| s.im as f32).collect(),
        label: mode,
        snr_db,
    };
    Ok((frame, clean))
}

pub fn synth_frame(mode: ModulationMode, snr_db: i32, imp: &ImpairmentConfig, seed: u64) -> Result<IqFrame> {
    synth_frame_with_reference(mode, snr_db, imp, seed).map(|(f, _)| f)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub modes: Vec<ModulationMode>,
    pub snr_grid: Vec<i32>,
    pub frames_per_cell: usize,
    pub impairments: ImpairmentConfig,
    pub seed: u64,
    /// Frames per shard file.
    pub shard_size: usize,
}

impl SynthSpec {
    pub fn new(modes: Vec<ModulationMode>, snr_grid: Vec<i32>, frames_per_cell: usize, seed: u64) -> Self {
        Self {
            modes,
            snr_grid,
            frames_per_cell,
            impairments: ImpairmentConfig::default(),
            seed,
            shard_size: 4096,
        }
    }

    pub fn total_frames(&self) -> usize {
        self.modes.len() * self.snr_grid.len() * self.frames_per_cell
    }

    fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(invalid!("mode set is empty"));
        }
        if self.snr_grid.is_empty() {
            return Err(invalid!("SNR grid is empty"));
        }
        if self.frames_per_cell == 0 {
            return Err(invalid!("frames per cell must be >= 1"));
        }
        if self.shard_size == 0 {
            return Err(invalid!("shard size must be >= 1"));
        }
        let mut seen = self.modes.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.modes.len() {
            return Err(invalid!("duplicate modes in the mode set"));
        }
        if let Some(m) = self.modes.iter().find(|m| !m.is_synthesizable()) {
            return Err(crate::Error::UnsupportedMode(m.name().into()));
        }
        if let Some(s) = self.snr_grid.iter().find(|&&s| i8::try_from(s).is_err()) {
            return Err(invalid!("SNR {s} dB outside the storable range"));
        }
        self.impairments.validate()
    }

    /// Frames in cell-major order before shuffling.
    pub fn generate(&self) -> Result<Vec<IqFrame>> {
        self.validate()?;
        let jobs: Vec<(ModulationMode, i32, usize)> = self
            .modes
            .iter()
            .flat_map(|&m| {
                self.snr_grid
                    .iter()
                    .flat_map(move |&s| (0..self.frames_per_cell).map(move |i| (m, s, i)))
            })
            .collect();
        jobs.into_par_iter()
            .map(|(mode, snr, idx)| {
                let seed = mix_seed(
                    self.seed,
                    &[mode.table_index() as u64, snr as i64 as u64, idx as u64],
                );
                synth_frame(mode, snr, &self.impairments, seed)
            })
            .collect()
    }
}

/// Generates every cell, shuffles the frames and writes shards plus
/// `manifest.json` into `out_dir`.
pub fn synth_dataset(spec: &SynthSpec, out_dir: &Path) -> Result<DatasetManifest> {
    let mut frames = spec.generate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, &[u64::MAX]));
    frames.shuffle(&mut rng);

    std::fs::create_dir_all(out_dir)?;
    let classes = spec.modes.clone();
    let mut shards = Vec::new();
    for (k, chunk) in frames.chunks(spec.shard_size).enumerate() {
        let file = format!("shard-{k:05}.iqs");
        write_shard(chunk, &classes, &out_dir.join(&file))?;
        shards.push(ShardEntry {
            file,
            frames: chunk.len(),
        });
    }
    let cells = spec
        .modes
        .iter()
        .flat_map(|&mode| {
            spec.snr_grid.iter().map(move |&snr_db| CellCount {
                mode,
                snr_db,
                count: spec.frames_per_cell,
            })
        })
        .collect();
    let manifest = DatasetManifest {
        frame_length: FRAME_LEN,
        classes,
        snr_grid: spec.snr_grid.clone(),
        total_frames: frames.len(),
        cells,
        shards,
        impairments: Some(spec.impairments),
        generator: Some(GENERATOR),
        root_seed: Some(spec.seed),
        source: "synthetic".into(),
    };
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::measure_snr;

    #[test]
    fn frames_are_deterministic_and_full_length() {
        let imp = ImpairmentConfig::default();
        for mode in ModulationMode::DESK_SET {
            let a = synth_frame(mode, 4, &imp, 99).unwrap();
            let b = synth_frame(mode, 4, &imp, 99).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.i_samples.len(), FRAME_LEN);
            assert_eq!(a.q_samples.len(), FRAME_LEN);
        }
        let c = synth_frame(ModulationMode::Qpsk, 4, &imp, 100).unwrap();
        assert_ne!(c, synth_frame(ModulationMode::Qpsk, 4, &imp, 99).unwrap());
    }

    #[test]
    fn high_snr_bpsk_reference_is_clean() {
        let (frame, clean) =
            synth_frame_with_reference(ModulationMode::Bpsk, 30, &ImpairmentConfig::default(), 3).unwrap();
        let noisy: Vec<Complex64> = frame
            .i_samples
            .iter()
            .zip(&frame.q_samples)
            .map(|(&i, &q)| Complex64::new(i as f64, q as f64))
            .collect();
        assert!(measure_snr(&clean, &noisy).unwrap() >= 29.0);
    }

    #[test]
    fn counts_follow_the_grid() {
        let spec = SynthSpec::new(
            vec![ModulationMode::Bpsk, ModulationMode::Fm],
            vec![-10, 0, 10],
            10,
            1,
        );
        assert_eq!(spec.total_frames(), 60);
        assert_eq!(spec.generate().unwrap().len(), 60);
        assert_eq!(
            SynthSpec::new(ModulationMode::DESK_SET.to_vec(), crate::signal::default_snr_grid(), 100, 0)
                .total_frames(),
            23_400
        );
    }

    #[test]
    fn invalid_specs_rejected() {
        let ok = SynthSpec::new(vec![ModulationMode::Bpsk], vec![0], 1, 0);
        let cases = [
            SynthSpec { modes: vec![], ..ok.clone() },
            SynthSpec { frames_per_cell: 0, ..ok.clone() },
            SynthSpec { modes: vec![ModulationMode::Qam256], ..ok.clone() },
            SynthSpec { snr_grid: vec![200], ..ok.clone() },
        ];
        for c in cases {
            assert!(c.generate().is_err(), "{c:?}");
        }
    }
}
