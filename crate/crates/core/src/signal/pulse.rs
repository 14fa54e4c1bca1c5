use std::f64::consts::PI;

/// Root-raised-cosine taps spanning `span` symbols, unit energy.
///
/// `delay` shifts the sampling instants by a fraction of a sample, which is
/// how a timing error enters the shaped waveform.
pub fn rrc_taps(rolloff: f64, sps: usize, span: usize, delay: f64) -> Vec<f64> {
    let n = span * sps + 1;
    let mid = (n / 2) as f64;
    let taps: Vec<f64> = (0..n)
        .map(|i| rrc_at((i as f64 - mid - delay) / sps as f64, rolloff))
        .collect();
    normalize_energy(taps)
}

/// Impulse response of the RRC filter at `t` symbol periods.
fn rrc_at(t: f64, beta: f64) -> f64 {
    if t.abs() < 1e-12 {
        return 1.0 - beta + 4.0 * beta / PI;
    }
    if beta > 0.0 && (t.abs() - 1.0 / (4.0 * beta)).abs() < 1e-9 {
        let a = PI / (4.0 * beta);
        return beta / 2f64.sqrt() * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos());
    }
    let num = (PI * t * (1.0 - beta)).sin() + 4.0 * beta * t * (PI * t * (1.0 + beta)).cos();
    let den = PI * t * (1.0 - (4.0 * beta * t).powi(2));
    num / den
}

/// Gaussian frequency-pulse filter for GMSK with bandwidth-time product `bt`,
/// spanning `span` symbols, normalized to unit sum.
pub fn gaussian_taps(bt: f64, sps: usize, span: usize, delay: f64) -> Vec<f64> {
    let n = span * sps + 1;
    let mid = (n / 2) as f64;
    // Standard deviation in symbol periods.
    let sigma = (2f64.ln()).sqrt() / (2.0 * PI * bt);
    let taps: Vec<f64> = (0..n)
        .map(|i| {
            let t = (i as f64 - mid - delay) / sps as f64;
            (-t * t / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|v| v / total).collect()
}

/// Hamming-windowed sinc low-pass with cutoff in cycles/sample, unit DC gain.
pub fn lowpass_taps(cutoff: f64, n: usize) -> Vec<f64> {
    let mid = (n - 1) as f64 / 2.0;
    let taps: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 - mid;
            let sinc = if t.abs() < 1e-12 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * t).sin() / (PI * t)
            };
            let window = 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos();
            sinc * window
        })
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|v| v / total).collect()
}

fn normalize_energy(taps: Vec<f64>) -> Vec<f64> {
    let energy: f64 = taps.iter().map(|v| v * v).sum();
    let s = 1.0 / energy.sqrt();
    taps.into_iter().map(|v| v * s).collect()
}
