use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{Matrix, Waveform, FFT_SIZE, HOP, N_BINS, SAMPLE_RATE, WIN_LEN};
use crate::error::{Error, Result};

/// Floor added to the power spectrum before the log.
pub const LPS_FLOOR: f64 = 1e-10;

/// Periodic Hamming window of length `n`.
pub fn hamming(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Number of frames covering `len` samples; the tail is zero-padded.
pub fn frame_count(len: usize) -> usize {
    if len <= WIN_LEN {
        1
    } else {
        1 + (len - WIN_LEN).div_ceil(HOP)
    }
}

/// `frames x 257` complex spectrum plus the length of the analysed signal.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrogram {
    pub frames: usize,
    pub bins: Vec<Complex64>,
    pub signal_len: usize,
}

impl ComplexSpectrogram {
    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.bins[t * N_BINS..(t + 1) * N_BINS]
    }
}

pub(crate) fn stft_raw(samples: &[f64]) -> ComplexSpectrogram {
    let window = hamming(WIN_LEN);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(FFT_SIZE);
    let frames = frame_count(samples.len());
    let mut bins = Vec::with_capacity(frames * N_BINS);
    let mut buf = vec![Complex64::new(0.0, 0.0); FFT_SIZE];
    for t in 0..frames {
        let start = t * HOP;
        for (n, b) in buf.iter_mut().enumerate() {
            let x = samples.get(start + n).copied().unwrap_or(0.0);
            *b = Complex64::new(if n < WIN_LEN { x * window[n] } else { 0.0 }, 0.0);
        }
        fft.process(&mut buf);
        bins.extend_from_slice(&buf[..N_BINS]);
    }
    ComplexSpectrogram {
        frames,
        bins,
        signal_len: samples.len(),
    }
}

/// Short-time Fourier transform: frame `t` covers samples `[256 t, 256 t + 512)`.
pub fn stft(w: &Waveform) -> Result<ComplexSpectrogram> {
    w.require_rate(SAMPLE_RATE)?;
    Ok(stft_raw(&w.samples))
}

/// Weighted overlap-add resynthesis with the analysis window, normalized by
/// the per-sample sum of squared windows.
pub fn istft_overlap_add(spec: &ComplexSpectrogram) -> Result<Waveform> {
    let window = hamming(WIN_LEN);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(FFT_SIZE);
    let total = (spec.frames - 1) * HOP + WIN_LEN;
    let mut acc = vec![0.0; total];
    let mut wsum = vec![0.0; total];
    let mut buf = vec![Complex64::new(0.0, 0.0); FFT_SIZE];
    for t in 0..spec.frames {
        let half = spec.frame(t);
        buf[..N_BINS].copy_from_slice(half);
        for k in N_BINS..FFT_SIZE {
            buf[k] = half[FFT_SIZE - k].conj();
        }
        ifft.process(&mut buf);
        let start = t * HOP;
        for n in 0..WIN_LEN {
            acc[start + n] += buf[n].re / FFT_SIZE as f64 * window[n];
            wsum[start + n] += window[n] * window[n];
        }
    }
    let len = spec.signal_len.min(total);
    let mut out = Vec::with_capacity(len);
    for n in 0..len {
        if wsum[n] < 1e-12 {
            return Err(Error::Internal(format!("overlap-add window sum vanishes at sample {}", n)));
        }
        out.push(acc[n] / wsum[n]);
    }
    Waveform::new(out, SAMPLE_RATE)
}

/// Log-power spectrum together with the phase needed for resynthesis.
#[derive(Clone, Debug, PartialEq)]
pub struct LpsMatrix {
    /// `frames x 257` values of `ln(|X|^2 + 1e-10)`.
    pub values: Matrix,
    /// Phase angle per bin, same layout as `values`.
    pub phase: Vec<f64>,
    pub signal_len: usize,
}

pub fn lps(spec: &ComplexSpectrogram) -> LpsMatrix {
    let values = spec.bins.iter().map(|c| (c.norm_sqr() + LPS_FLOOR).ln()).collect();
    let phase = spec.bins.iter().map(|c| c.arg()).collect();
    LpsMatrix {
        values: Matrix::new(spec.frames, N_BINS, values).expect("frame layout"),
        phase,
        signal_len: spec.signal_len,
    }
}

/// Rebuilds a spectrum with magnitude `sqrt(exp(lps))` and the given phase.
pub fn lps_to_spectrogram(values: &Matrix, phase: &[f64], signal_len: usize) -> Result<ComplexSpectrogram> {
    if values.cols != N_BINS || phase.len() != values.data.len() {
        return Err(Error::Contract(format!(
            "LPS matrix {}x{} does not match {} phase values",
            values.rows,
            values.cols,
            phase.len()
        )));
    }
    let bins = values
        .data
        .iter()
        .zip(phase)
        .map(|(&l, &p)| Complex64::from_polar(l.exp().sqrt(), p))
        .collect();
    Ok(ComplexSpectrogram {
        frames: values.rows,
        bins,
        signal_len,
    })
}
