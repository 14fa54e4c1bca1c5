//! Synthesizes one frame per supported mode and reports the SNR measured
//! against the noise-free reference.
//!
//! ```text
//! cargo run --example synthesize_frames -- 6
//! ```

use modclass::signal::{mean_power, measure_snr, synth_frame_with_reference, ImpairmentConfig, ModulationMode};
use num_complex::Complex64;

fn main() -> modclass::Result<()> {
    let snr_db: i32 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let imp = ImpairmentConfig::default();
    println!("{:<8} {:>10} {:>12}", "mode", "power", "snr (dB)");
    for (n, mode) in ModulationMode::DESK_SET.into_iter().enumerate() {
        let (frame, clean) = synth_frame_with_reference(mode, snr_db, &imp, 1000 + n as u64)?;
        let noisy: Vec<Complex64> = frame
            .i_samples
            .iter()
            .zip(&frame.q_samples)
            .map(|(&i, &q)| Complex64::new(i as f64, q as f64))
            .collect();
        println!(
            "{:<8} {:>10.3} {:>12.2}",
            mode.name(),
            mean_power(&noisy),
            measure_snr(&clean, &noisy)?
        );
    }
    Ok(())
}
