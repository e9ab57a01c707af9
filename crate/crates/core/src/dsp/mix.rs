use rand::Rng;

use super::Waveform;
use crate::error::{ensure, Result};

/// Mean power of a signal.
pub fn power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixInfo {
    /// Start of the noise crop (wraps around the noise signal).
    pub offset: usize,
    /// Gain applied to the cropped noise.
    pub noise_gain: f64,
}

/// Adds noise to `clean` so that `10 log10(P_clean / P_noise) == snr_db`.
///
/// The noise is cropped from a random offset, wrapping around when shorter than
/// the clean signal.
pub fn mix_at_snr<R: Rng + ?Sized>(clean: &Waveform, noise: &Waveform, snr_db: f64, rng: &mut R) -> Result<(Waveform, MixInfo)> {
    ensure!(clean.sample_rate == noise.sample_rate, "clean is {} Hz but noise is {} Hz", clean.sample_rate, noise.sample_rate);
    ensure!(snr_db.is_finite(), "SNR must be finite, got {}", snr_db);
    ensure!(!noise.is_empty(), "noise signal is empty");
    let p_clean = power(&clean.samples);
    ensure!(p_clean > 0.0, "clean signal has zero power");
    let offset = rng.gen_range(0..noise.len());
    let crop: Vec<f64> = (0..clean.len()).map(|i| noise.samples[(offset + i) % noise.len()]).collect();
    let p_noise = power(&crop);
    ensure!(p_noise > 0.0, "noise crop has zero power");
    let noise_gain = (p_clean / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let samples = clean.samples.iter().zip(&crop).map(|(c, n)| c + noise_gain * n).collect();
    Ok((Waveform::new(samples, clean.sample_rate)?, MixInfo { offset, noise_gain }))
}
