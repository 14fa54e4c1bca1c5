//! Trains three small models that differ only in kernel size and combines
//! them by plurality vote.

use modclass::dataset::{split, FrameSet, SplitSpec};
use modclass::ensemble::{Ensemble, TieBreak};
use modclass::model::{ModelConfig, SeMsfn};
use modclass::signal::{ModulationMode, SynthSpec};
use modclass::train::{train, TrainConfig};

fn main() -> modclass::Result<()> {
    let modes = vec![ModulationMode::Bpsk, ModulationMode::Qpsk, ModulationMode::Psk8, ModulationMode::Fm];
    let set = FrameSet {
        classes: modes.clone(),
        frames: SynthSpec::new(modes, vec![-4, 4, 12], 60, 8).generate()?,
    };
    let splits = split(&set, &SplitSpec::new(9))?;
    let cfg = TrainConfig {
        epochs: 10,
        batch_size: 32,
        seed: 10,
        ..TrainConfig::default()
    };

    let mut members = Vec::new();
    for k in [3, 5, 7] {
        let config = ModelConfig {
            kernel_size: k,
            blocks: 2,
            repetition: 1,
            base_filters: 8,
            ..ModelConfig::default().with_classes(set.num_classes())
        };
        let mut model = SeMsfn::new(config, k as u64)?;
        train(&mut model, &set, &splits.train, &splits.val, &cfg)?;
        members.push((format!("k{k}"), model));
    }

    let ensemble = Ensemble::new(members, TieBreak::MeanProbability)?;
    let result = ensemble.evaluate(&set, &splits.test, 64, None)?;
    for m in &result.members {
        println!("{:<4} {:.3}", m.name, m.accuracy);
    }
    println!("vote {:.3}", result.report.overall_accuracy());
    Ok(())
}
