//! Labeled I/Q frame synthesis.
//!
//! A frame is produced by mapping pseudo-random bits to a waveform, applying
//! the configured channel impairments, adding calibrated white Gaussian noise
//! and splitting the first [`FRAME_LEN`] complex samples into I and Q.

mod channel;
mod constellation;
mod modulate;
mod pulse;
mod synth;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use channel::{add_awgn, measure_snr, mean_power};
pub use constellation::{bits_per_symbol, constellation, map_bits};
pub use modulate::{min_symbols, modulate, GeneratorParams, GENERATOR};
pub use pulse::{gaussian_taps, lowpass_taps, rrc_taps};
pub use synth::{synth_dataset, synth_frame, synth_frame_with_reference, SynthSpec};

/// Complex samples per frame.
pub const FRAME_LEN: usize = 1024;

/// Default SNR grid, -20 dB to +30 dB in 2 dB steps.
pub fn default_snr_grid() -> Vec<i32> {
    (-20..=30).step_by(2).collect()
}

macro_rules! modes {
    ($($variant:ident => $name:literal),* $(,)?) => {
        /// Modulation modes of the public 24-class benchmark. Only the
        /// [`ModulationMode::DESK_SET`] subset has a waveform generator; the
        /// rest exist so converted real-world shards can be labeled.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum ModulationMode {
            $($variant),*
        }

        impl ModulationMode {
            /// All 24 modes in the benchmark's published order.
            pub const ALL: [ModulationMode; 24] = [$(ModulationMode::$variant),*];

            pub fn name(self) -> &'static str {
                match self {
                    $(ModulationMode::$variant => $name),*
                }
            }
        }

        impl FromStr for ModulationMode {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_uppercase().as_str() {
                    $(n if n == $name.to_ascii_uppercase() => Ok(ModulationMode::$variant),)*
                    _ => Err(Error::UnsupportedMode(s.to_string())),
                }
            }
        }
    };
}

modes! {
    Ook => "OOK",
    Ask4 => "4ASK",
    Ask8 => "8ASK",
    Bpsk => "BPSK",
    Qpsk => "QPSK",
    Psk8 => "8PSK",
    Psk16 => "16PSK",
    Psk32 => "32PSK",
    Apsk16 => "16APSK",
    Apsk32 => "32APSK",
    Apsk64 => "64APSK",
    Apsk128 => "128APSK",
    Qam16 => "16QAM",
    Qam32 => "32QAM",
    Qam64 => "64QAM",
    Qam128 => "128QAM",
    Qam256 => "256QAM",
    AmSsbWc => "AM-SSB-WC",
    AmSsbSc => "AM-SSB-SC",
    AmDsbWc => "AM-DSB-WC",
    AmDsbSc => "AM-DSB-SC",
    Fm => "FM",
    Gmsk => "GMSK",
    Oqpsk => "OQPSK",
}

impl ModulationMode {
    /// The nine modes this toolkit can synthesize.
    pub const DESK_SET: [ModulationMode; 9] = [
        ModulationMode::Ook,
        ModulationMode::Ask4,
        ModulationMode::Bpsk,
        ModulationMode::Qpsk,
        ModulationMode::Psk8,
        ModulationMode::Qam16,
        ModulationMode::Qam64,
        ModulationMode::Gmsk,
        ModulationMode::Fm,
    ];

    pub fn is_synthesizable(self) -> bool {
        Self::DESK_SET.contains(&self)
    }

    /// Position in [`ModulationMode::ALL`]; stable across releases.
    pub fn table_index(self) -> usize {
        Self::ALL.iter().position(|&m| m == self).expect("listed mode")
    }

    /// True for constellation-mapped modes (ASK/PSK/QAM families).
    pub fn is_linear(self) -> bool {
        matches!(
            self,
            ModulationMode::Ook
                | ModulationMode::Ask4
                | ModulationMode::Bpsk
                | ModulationMode::Qpsk
                | ModulationMode::Psk8
                | ModulationMode::Qam16
                | ModulationMode::Qam64
        )
    }
}

impl fmt::Display for ModulationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for ModulationMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ModulationMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Transmit pulse `h(.)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PulseShape {
    RootRaisedCosine { rolloff: f64 },
    Rectangular,
    /// Zero-stuffed impulses.
    None,
}

/// Channel and shaping parameters of the received-signal model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpairmentConfig {
    /// Scalar amplitude fade `A`, applied after unit-power normalization.
    pub amplitude_fade: f64,
    /// Carrier frequency offset in cycles per sample.
    pub carrier_offset: f64,
    /// Standard deviation of the per-sample phase jitter, radians.
    pub phase_jitter_std: f64,
    /// Timing error as a fraction of the symbol period, in `[0, 1)`.
    pub timing_error: f64,
    pub samples_per_symbol: usize,
    pub pulse_shape: PulseShape,
}

impl Default for ImpairmentConfig {
    fn default() -> Self {
        Self {
            amplitude_fade: 1.0,
            carrier_offset: 0.0,
            phase_jitter_std: 0.0,
            timing_error: 0.0,
            samples_per_symbol: 8,
            pulse_shape: PulseShape::RootRaisedCosine { rolloff: 0.35 },
        }
    }
}

impl ImpairmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude_fade > 0.0) || !self.amplitude_fade.is_finite() {
            return Err(invalid!("amplitude fade must be positive"));
        }
        if self.samples_per_symbol < 2 {
            return Err(invalid!("samples per symbol must be >= 2"));
        }
        if !(0.0..1.0).contains(&self.timing_error) {
            return Err(invalid!("timing error must lie in [0, 1)"));
        }
        if !self.carrier_offset.is_finite() {
            return Err(invalid!("carrier offset must be finite"));
        }
        if !(self.phase_jitter_std >= 0.0) || !self.phase_jitter_std.is_finite() {
            return Err(invalid!("phase jitter std must be finite and >= 0"));
        }
        if let PulseShape::RootRaisedCosine { rolloff } = self.pulse_shape {
            if !(0.0..=1.0).contains(&rolloff) {
                return Err(invalid!("rolloff must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// One labeled example: 1024 complex samples as separate I and Q sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct IqFrame {
    pub i_samples: Vec<f32>,
    pub q_samples: Vec<f32>,
    pub label: ModulationMode,
    pub snr_db: i32,
}

impl IqFrame {
    pub fn len(&self) -> usize {
        self.i_samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i_samples.is_empty()
    }
}
