use num_complex::Complex64;

use super::ModulationMode;
use crate::error::{invalid, Error, Result};

pub fn bits_per_symbol(mode: ModulationMode) -> Result<usize> {
    use ModulationMode::*;
    Ok(match mode {
        Ook | Bpsk => 1,
        Ask4 | Qpsk => 2,
        Psk8 => 3,
        Qam16 => 4,
        Qam64 => 6,
        other => return Err(Error::UnsupportedMode(other.name().into())),
    })
}

fn gray_to_binary(mut g: usize) -> usize {
    let mut b = g;
    while g > 0 {
        g >>= 1;
        b ^= g;
    }
    b
}

/// Gray-coded pulse-amplitude level for an `m_bits` word: `2 * idx - (M - 1)`.
fn pam_level(word: usize, m_bits: usize) -> f64 {
    let levels = 1usize << m_bits;
    2.0 * gray_to_binary(word) as f64 - (levels - 1) as f64
}

/// Unit-mean-power symbol table indexed by the bit word (MSB first).
pub fn constellation(mode: ModulationMode) -> Result<Vec<Complex64>> {
    use ModulationMode::*;
    let bps = bits_per_symbol(mode)?;
    let size = 1usize << bps;
    let raw: Vec<Complex64> = (0..size)
        .map(|w| match mode {
            Ook => Complex64::new(w as f64, 0.0),
            Bpsk => Complex64::new(1.0 - 2.0 * w as f64, 0.0),
            Ask4 => Complex64::new(pam_level(w, 2), 0.0),
            Qpsk => Complex64::new(1.0 - 2.0 * (w >> 1) as f64, 1.0 - 2.0 * (w & 1) as f64),
            Psk8 => Complex64::from_polar(1.0, std::f64::consts::TAU * gray_to_binary(w) as f64 / 8.0),
            Qam16 | Qam64 => {
                let half = bps / 2;
                let mask = (1 << half) - 1;
                Complex64::new(pam_level(w >> half, half), pam_level(w & mask, half))
            }
            _ => unreachable!("bits_per_symbol rejected {mode}"),
        })
        .collect();
    let power = raw.iter().map(|p| p.norm_sqr()).sum::<f64>() / size as f64;
    let scale = 1.0 / power.sqrt();
    Ok(raw.into_iter().map(|p| p * scale).collect())
}

/// Maps a bit sequence (one bit per byte, 0 or 1) onto symbols.
pub fn map_bits(mode: ModulationMode, bits: &[u8]) -> Result<Vec<Complex64>> {
    let bps = bits_per_symbol(mode)?;
    if !bits.len().is_multiple_of(bps) {
        return Err(invalid!(
            "{} bits do not divide into {}-bit {} symbols",
            bits.len(),
            bps,
            mode
        ));
    }
    if bits.iter().any(|&b| b > 1) {
        return Err(invalid!("bit values must be 0 or 1"));
    }
    let table = constellation(mode)?;
    Ok(bits
        .chunks_exact(bps)
        .map(|chunk| table[chunk.iter().fold(0usize, |w, &b| (w << 1) | b as usize)])
        .collect())
}
