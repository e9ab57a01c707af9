use std::f64::consts::PI;

use super::stft::stft_raw;
use super::{Matrix, Waveform, FFT_SIZE, N_BINS, SAMPLE_RATE};
use crate::error::Result;

pub const N_MELS: usize = 40;
pub const N_CEPS: usize = 13;
/// Static coefficients plus first and second differences.
pub const MFCC_DIM: usize = 3 * N_CEPS;

const PRE_EMPHASIS: f64 = 0.97;
const LOG_FLOOR: f64 = 1e-10;
const DELTA_WINDOW: usize = 2;

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters equally spaced on the mel scale between `f_min` and `f_max`,
/// evaluated at the FFT bin centre frequencies. Returns `n_mels x 257` weights.
pub fn mel_filterbank(n_mels: usize, f_min: f64, f_max: f64) -> Matrix {
    let (m_lo, m_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut fb = Matrix::zeros(n_mels, N_BINS);
    for m in 0..n_mels {
        let (lo, centre, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..N_BINS {
            let f = k as f64 * SAMPLE_RATE as f64 / FFT_SIZE as f64;
            let w = if f > lo && f <= centre {
                (f - lo) / (centre - lo)
            } else if f > centre && f < hi {
                (hi - f) / (hi - centre)
            } else {
                0.0
            };
            fb.data[m * N_BINS + k] = w;
        }
    }
    fb
}

/// Orthonormal DCT-II, keeping the first `n_out` coefficients.
pub fn dct_ortho(input: &[f64], n_out: usize) -> Vec<f64> {
    let n = input.len() as f64;
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            scale
                * input
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| x * (PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n)).cos())
                    .sum::<f64>()
        })
        .collect()
}

/// Regression deltas over `±window` frames with edge replication.
pub fn deltas(m: &Matrix, window: usize) -> Matrix {
    let norm: f64 = 2.0 * (1..=window).map(|n| (n * n) as f64).sum::<f64>();
    let last = m.rows.saturating_sub(1) as isize;
    let at = |t: isize| t.clamp(0, last) as usize;
    let mut out = Matrix::zeros(m.rows, m.cols);
    for t in 0..m.rows {
        for n in 1..=window {
            let (fwd, bwd) = (m.row(at(t as isize + n as isize)), m.row(at(t as isize - n as isize)));
            let row = out.row_mut(t);
            for c in 0..row.len() {
                row[c] += n as f64 * (fwd[c] - bwd[c]);
            }
        }
        out.row_mut(t).iter_mut().for_each(|v| *v /= norm);
    }
    out
}

/// 13 MFCCs with deltas and delta-deltas, one row per STFT frame.
pub fn mfcc(w: &Waveform) -> Result<Matrix> {
    w.require_rate(SAMPLE_RATE)?;
    let mut emphasized = Vec::with_capacity(w.len());
    let mut prev = 0.0;
    for &x in &w.samples {
        emphasized.push(x - PRE_EMPHASIS * prev);
        prev = x;
    }
    let spec = stft_raw(&emphasized);
    let fb = mel_filterbank(N_MELS, 0.0, SAMPLE_RATE as f64 / 2.0);
    let mut statics = Matrix::zeros(spec.frames, N_CEPS);
    let mut energies = vec![0.0; N_MELS];
    for t in 0..spec.frames {
        let power: Vec<f64> = spec.frame(t).iter().map(|c| c.norm_sqr()).collect();
        for (m, e) in energies.iter_mut().enumerate() {
            let e_lin: f64 = fb.row(m).iter().zip(&power).map(|(w, p)| w * p).sum();
            *e = (e_lin + LOG_FLOOR).ln();
        }
        statics.row_mut(t).copy_from_slice(&dct_ortho(&energies, N_CEPS));
    }
    let d1 = deltas(&statics, DELTA_WINDOW);
    let d2 = deltas(&d1, DELTA_WINDOW);
    let mut out = Matrix::zeros(spec.frames, MFCC_DIM);
    for t in 0..spec.frames {
        let row = out.row_mut(t);
        row[..N_CEPS].copy_from_slice(statics.row(t));
        row[N_CEPS..2 * N_CEPS].copy_from_slice(d1.row(t));
        row[2 * N_CEPS..].copy_from_slice(d2.row(t));
    }
    Ok(out)
}
