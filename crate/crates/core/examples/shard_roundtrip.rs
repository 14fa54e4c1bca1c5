//! Writes a small synthetic dataset to disk, loads it back and splits it.

use modclass::dataset::{load_dir, split, SplitSpec};
use modclass::signal::{synth_dataset, ModulationMode, SynthSpec};

fn main() -> modclass::Result<()> {
    let dir = std::env::temp_dir().join(format!("modclass-shards-{}", std::process::id()));
    let mut spec = SynthSpec::new(
        vec![ModulationMode::Bpsk, ModulationMode::Qpsk, ModulationMode::Fm],
        vec![0, 10, 20],
        20,
        7,
    );
    spec.shard_size = 64;
    let manifest = synth_dataset(&spec, &dir)?;
    println!("wrote {} frames in {} shards to {}", spec.total_frames(), manifest.shards.len(), dir.display());

    let set = load_dir(&dir)?;
    let splits = split(&set, &SplitSpec::new(3))?;
    println!(
        "loaded {} frames; split {} / {} / {}",
        set.len(),
        splits.train.len(),
        splits.val.len(),
        splits.test.len()
    );
    for ((class, snr), count) in set.cell_histogram() {
        println!("  {:<5} {snr:>3} dB: {count}", set.classes[class].name());
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
