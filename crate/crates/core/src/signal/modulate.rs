use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::constellation::{bits_per_symbol, constellation};
use super::pulse::{gaussian_taps, lowpass_taps, rrc_taps};
use super::{channel::mean_power, ImpairmentConfig, ModulationMode, PulseShape, FRAME_LEN};
use crate::error::{invalid, Error, Result};

/// Fixed waveform-generator constants, recorded in dataset manifests.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub rrc_span_symbols: usize,
    pub gmsk_bt: f64,
    pub gmsk_modulation_index: f64,
    pub gmsk_span_symbols: usize,
    pub fm_message_cutoff: f64,
    pub fm_modulation_index: f64,
    pub fm_filter_taps: usize,
}

pub const GENERATOR: GeneratorParams = GeneratorParams {
    rrc_span_symbols: 8,
    gmsk_bt: 0.3,
    gmsk_modulation_index: 0.5,
    gmsk_span_symbols: 4,
    fm_message_cutoff: 0.05,
    fm_modulation_index: 1.0,
    fm_filter_taps: 129,
};

fn timing_delay(imp: &ImpairmentConfig) -> f64 {
    imp.timing_error * imp.samples_per_symbol as f64
}

fn linear_taps(imp: &ImpairmentConfig) -> Vec<f64> {
    let sps = imp.samples_per_symbol;
    let delay = timing_delay(imp);
    match imp.pulse_shape {
        PulseShape::RootRaisedCosine { rolloff } => {
            rrc_taps(rolloff, sps, GENERATOR.rrc_span_symbols, delay)
        }
        PulseShape::Rectangular => {
            let shift = delay.round() as usize;
            let mut taps = vec![0.0; shift];
            taps.extend(std::iter::repeat_n(1.0, sps));
            taps
        }
        PulseShape::None => {
            let mut taps = vec![0.0; delay.round() as usize];
            taps.push(1.0);
            taps
        }
    }
}

/// Frequency pulse for GMSK: Gaussian filter convolved with a one-symbol
/// rectangle, scaled to unit area per symbol.
fn gmsk_pulse(imp: &ImpairmentConfig) -> Vec<f64> {
    let sps = imp.samples_per_symbol;
    let g = gaussian_taps(GENERATOR.gmsk_bt, sps, GENERATOR.gmsk_span_symbols, timing_delay(imp));
    let mut pulse = vec![0.0; g.len() + sps - 1];
    for (i, &gv) in g.iter().enumerate() {
        for p in &mut pulse[i..i + sps] {
            *p += gv;
        }
    }
    let total: f64 = pulse.iter().sum();
    pulse.into_iter().map(|v| v / total).collect()
}

fn transient_len(mode: ModulationMode, imp: &ImpairmentConfig) -> Result<usize> {
    Ok(match mode {
        m if m.is_linear() => linear_taps(imp).len() - 1,
        ModulationMode::Gmsk => gmsk_pulse(imp).len() - 1,
        ModulationMode::Fm => GENERATOR.fm_filter_taps - 1,
        other => return Err(Error::UnsupportedMode(other.name().into())),
    })
}

/// Smallest symbol count whose waveform still covers a full frame after the
/// filter transient is trimmed.
pub fn min_symbols(mode: ModulationMode, imp: &ImpairmentConfig) -> Result<usize> {
    imp.validate()?;
    let needed = FRAME_LEN + transient_len(mode, imp)?;
    Ok(needed.div_ceil(imp.samples_per_symbol))
}

/// Noise-free baseband waveform for `n_symbols` random symbols.
///
/// The output is trimmed of filter transients, scaled to unit mean power, and
/// then faded, frequency-shifted and phase-jittered per `imp`.
pub fn modulate(
    mode: ModulationMode,
    seed: u64,
    n_symbols: usize,
    imp: &ImpairmentConfig,
) -> Result<Vec<Complex64>> {
    imp.validate()?;
    if !mode.is_synthesizable() {
        return Err(Error::UnsupportedMode(mode.name().into()));
    }
    let sps = imp.samples_per_symbol;
    let transient = transient_len(mode, imp)?;
    let total = n_symbols * sps;
    if total < FRAME_LEN + transient {
        return Err(invalid!(
            "{n_symbols} symbols x {sps} samples cannot fill a {FRAME_LEN}-sample frame \
             plus a {transient}-sample transient (need {})",
            min_symbols(mode, imp)?
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut wave = match mode {
        m if m.is_linear() => linear_wave(m, &mut rng, n_symbols, imp)?,
        ModulationMode::Gmsk => gmsk_wave(&mut rng, n_symbols, imp),
        ModulationMode::Fm => fm_wave(&mut rng, total),
        _ => unreachable!("checked synthesizable"),
    };
    debug_assert_eq!(wave.len(), total - transient);

    let scale = 1.0 / mean_power(&wave).sqrt();
    let jitter = if imp.phase_jitter_std > 0.0 {
        Some(Normal::new(0.0, imp.phase_jitter_std).map_err(|e| invalid!("{e}"))?)
    } else {
        None
    };
    for (k, s) in wave.iter_mut().enumerate() {
        let theta = jitter.map_or(0.0, |d| d.sample(&mut rng));
        let rot = Complex64::from_polar(imp.amplitude_fade, TAU * imp.carrier_offset * k as f64 + theta);
        *s = *s * scale * rot;
    }
    Ok(wave)
}

fn random_bits(rng: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.gen_range(0..=1u8)).collect()
}

fn linear_wave(
    mode: ModulationMode,
    rng: &mut ChaCha8Rng,
    n_symbols: usize,
    imp: &ImpairmentConfig,
) -> Result<Vec<Complex64>> {
    let bps = bits_per_symbol(mode)?;
    let table = constellation(mode)?;
    let sps = imp.samples_per_symbol;
    let taps = linear_taps(imp);
    let total = n_symbols * sps;
    let mut out = vec![Complex64::new(0.0, 0.0); total + taps.len() - 1];
    for n in 0..n_symbols {
        let word = random_bits(rng, bps)
            .into_iter()
            .fold(0usize, |w, b| (w << 1) | b as usize);
        let sym = table[word];
        for (j, &h) in taps.iter().enumerate() {
            out[n * sps + j] += sym * h;
        }
    }
    Ok(out[taps.len() - 1..total].to_vec())
}

fn gmsk_wave(rng: &mut ChaCha8Rng, n_symbols: usize, imp: &ImpairmentConfig) -> Vec<Complex64> {
    let sps = imp.samples_per_symbol;
    let pulse = gmsk_pulse(imp);
    let total = n_symbols * sps;
    let mut freq = vec![0.0f64; total + pulse.len() - 1];
    for n in 0..n_symbols {
        let a = if rng.gen_bool(0.5) { -1.0 } else { 1.0 };
        for (j, &g) in pulse.iter().enumerate() {
            freq[n * sps + j] += a * g;
        }
    }
    let mut phase = 0.0;
    freq[..total]
        .iter()
        .map(|f| {
            phase += PI * GENERATOR.gmsk_modulation_index * f;
            Complex64::from_polar(1.0, phase)
        })
        .skip(pulse.len() - 1)
        .collect()
}

fn fm_wave(rng: &mut ChaCha8Rng, total: usize) -> Vec<Complex64> {
    let taps = lowpass_taps(GENERATOR.fm_message_cutoff, GENERATOR.fm_filter_taps);
    let noise: Vec<f64> = (0..total).map(|_| StandardNormal.sample(rng)).collect();
    let message: Vec<f64> = (taps.len() - 1..total)
        .map(|k| taps.iter().enumerate().map(|(j, h)| h * noise[k - j]).sum())
        .collect();
    let rms = (message.iter().map(|m| m * m).sum::<f64>() / message.len() as f64).sqrt();
    let deviation = GENERATOR.fm_modulation_index * GENERATOR.fm_message_cutoff;
    let mut phase = 0.0;
    message
        .iter()
        .map(|m| {
            phase += TAU * deviation * m / rms;
            Complex64::from_polar(1.0, phase)
        })
        .collect()
}
