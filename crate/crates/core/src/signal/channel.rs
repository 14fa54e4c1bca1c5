use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};

pub fn mean_power(signal: &[Complex64]) -> f64 {
    signal.iter().map(|s| s.norm_sqr()).sum::<f64>() / signal.len() as f64
}

/// Adds circularly-symmetric white Gaussian noise so that
/// `10 log10(p_s / p_n) = snr_db`, with `p_s` measured on `signal`.
pub fn add_awgn(signal: &[Complex64], snr_db: f64, seed: u64) -> Result<Vec<Complex64>> {
    if signal.is_empty() {
        return Err(invalid!("cannot add noise to an empty signal"));
    }
    if !snr_db.is_finite() {
        return Err(invalid!("SNR must be finite"));
    }
    if signal.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
        return Err(Error::NonFinite("add_awgn input".into()));
    }
    let p_s = mean_power(signal);
    let p_n = p_s * 10f64.powf(-snr_db / 10.0);
    let sigma = (p_n / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(signal
        .iter()
        .map(|&s| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            s + Complex64::new(re * sigma, im * sigma)
        })
        .collect())
}

/// `10 log10(mean|clean|^2 / mean|noisy - clean|^2)`.
///
/// Returns `f64::INFINITY` when the two sequences are identical.
pub fn measure_snr(clean: &[Complex64], noisy: &[Complex64]) -> Result<f64> {
    if clean.len() != noisy.len() {
        return Err(invalid!(
            "clean ({}) and noisy ({}) lengths differ",
            clean.len(),
            noisy.len()
        ));
    }
    if clean.is_empty() {
        return Err(invalid!("cannot measure SNR of empty sequences"));
    }
    let p_s = mean_power(clean);
    let p_n = clean
        .iter()
        .zip(noisy)
        .map(|(c, n)| (n - c).norm_sqr())
        .sum::<f64>()
        / clean.len() as f64;
    if p_n == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (p_s / p_n).log10())
}
