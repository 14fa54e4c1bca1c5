//! Trains a small model on synthetic frames and prints per-SNR test accuracy.
//!
//! ```text
//! RUST_LOG=info cargo run --release --example train_desk
//! ```

use modclass::dataset::{split, FrameSet, SplitSpec};
use modclass::model::{ModelConfig, SeMsfn};
use modclass::signal::{ModulationMode, SynthSpec};
use modclass::train::{evaluate, train, TrainConfig};

fn main() -> modclass::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let modes = vec![ModulationMode::Bpsk, ModulationMode::Qpsk, ModulationMode::Qam16, ModulationMode::Fm];
    let spec = SynthSpec::new(modes.clone(), vec![0, 10, 20], 60, 1);
    let set = FrameSet {
        classes: modes,
        frames: spec.generate()?,
    };
    let splits = split(&set, &SplitSpec::new(2))?;

    let config = ModelConfig {
        kernel_size: 5,
        blocks: 2,
        repetition: 1,
        base_filters: 8,
        ..ModelConfig::default().with_classes(set.num_classes())
    };
    let mut model = SeMsfn::new(config, 3)?;
    println!("{} params, {} training frames", model.param_count(), splits.train.len());
    let cfg = TrainConfig {
        epochs: 8,
        batch_size: 32,
        seed: 4,
        ..TrainConfig::default()
    };
    let curve = train(&mut model, &set, &splits.train, &splits.val, &cfg)?;
    println!("best epoch {}", curve.best_epoch);

    let report = evaluate(&model, &set, &splits.test, 64, None)?;
    for (snr, acc) in report.per_snr_accuracy() {
        println!("{snr:>3} dB: {acc:.3}");
    }
    println!("overall: {:.3}", report.overall_accuracy());
    Ok(())
}
