use crate::dsp::Waveform;
use crate::error::{ensure, Error, Result};

/// 32 ms at 16 kHz.
pub const SSNR_FRAME: usize = 512;
pub const SSNR_MIN: f64 = -10.0;
pub const SSNR_MAX: f64 = 35.0;
/// Frames this far below the loudest clean frame count as silent.
pub const SSNR_SILENCE_DB: f64 = 40.0;

/// Mean per-frame SNR over non-overlapping 32 ms frames, each clamped to `[-10, 35]` dB.
///
/// Frames with zero clean energy, or more than 40 dB below the loudest clean
/// frame, are skipped. A trailing partial frame is ignored unless it is the only one.
pub fn segmental_snr(clean: &Waveform, enhanced: &Waveform) -> Result<f64> {
    ensure!(
        clean.len() == enhanced.len(),
        "segmental SNR needs equal lengths, got {} and {}",
        clean.len(),
        enhanced.len()
    );
    let frame = (SSNR_FRAME as u64 * clean.sample_rate as u64 / 16_000).max(1) as usize;
    let n_frames = (clean.len() / frame).max(1);
    let frames: Vec<(f64, f64)> = (0..n_frames)
        .map(|f| {
            let end = ((f + 1) * frame).min(clean.len());
            let range = f * frame..end;
            let signal: f64 = clean.samples[range.clone()].iter().map(|v| v * v).sum();
            let noise: f64 = clean.samples[range.clone()]
                .iter()
                .zip(&enhanced.samples[range])
                .map(|(c, e)| (c - e) * (c - e))
                .sum();
            (signal, noise)
        })
        .collect();
    let loudest = frames.iter().map(|f| f.0).fold(0.0, f64::max);
    if loudest <= 0.0 {
        return Err(Error::Contract("segmental SNR: the clean signal is silent".into()));
    }
    let threshold = loudest * 10f64.powf(-SSNR_SILENCE_DB / 10.0);
    let scores: Vec<f64> = frames
        .iter()
        .filter(|(s, _)| *s > 0.0 && *s >= threshold)
        .map(|&(s, n)| {
            let snr = if n == 0.0 { f64::INFINITY } else { 10.0 * (s / n).log10() };
            snr.clamp(SSNR_MIN, SSNR_MAX)
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}
