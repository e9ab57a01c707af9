//! Short-time objective intelligibility, following the reference definition
//! (10 kHz, 15 third-octave bands from 150 Hz, 384 ms segments, -15 dB clipping).

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::dsp::Waveform;
use crate::error::{ensure, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct StoiConfig {
    pub rate: u32,
    pub frame: usize,
    pub nfft: usize,
    pub bands: usize,
    pub min_freq: f64,
    /// Frames per analysis segment.
    pub segment: usize,
    /// Lower SDR bound in dB.
    pub beta: f64,
    /// Frames this far below the loudest clean frame are dropped.
    pub dyn_range: f64,
}

impl Default for StoiConfig {
    fn default() -> Self {
        StoiConfig {
            rate: 10_000,
            frame: 256,
            nfft: 512,
            bands: 15,
            min_freq: 150.0,
            segment: 30,
            beta: -15.0,
            dyn_range: 40.0,
        }
    }
}

const EPS: f64 = f64::EPSILON;

/// Hann window without the zero end points (`hanning(n + 2)[1..n + 1]`).
fn hann(n: usize) -> Vec<f64> {
    (1..=n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n + 1) as f64).cos()).collect()
}

/// Band-limited resampling with a Hann-windowed sinc kernel.
pub fn resample(x: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to {
        return x.to_vec();
    }
    const HALF: f64 = 32.0;
    let ratio = from as f64 / to as f64;
    // Cutoff at the lower Nyquist frequency, in cycles per input sample.
    let fc = 0.5 * (to as f64 / from as f64).min(1.0);
    let span = HALF / (2.0 * fc);
    let out_len = ((x.len() as u64 * to as u64).div_ceil(from as u64)) as usize;
    (0..out_len)
        .map(|n| {
            let t = n as f64 * ratio;
            let lo = (t - span).ceil().max(0.0) as usize;
            let hi = ((t + span).floor() as usize).min(x.len().saturating_sub(1));
            (lo..=hi)
                .map(|k| {
                    let d = t - k as f64;
                    let arg = 2.0 * fc * d;
                    let sinc = if arg == 0.0 { 1.0 } else { (PI * arg).sin() / (PI * arg) };
                    let w = 0.5 + 0.5 * (PI * d / span).cos();
                    x[k] * 2.0 * fc * sinc * w
                })
                .sum()
        })
        .collect()
}

/// Drops frames of `x` more than `dyn_range` dB below its loudest frame and
/// applies the same mask to `y`; both are re-synthesized by overlap-add.
fn remove_silent_frames(x: &[f64], y: &[f64], dyn_range: f64, frame: usize, hop: usize) -> (Vec<f64>, Vec<f64>) {
    let w = hann(frame);
    let starts: Vec<usize> = (0..).map(|i| i * hop).take_while(|s| s + frame < x.len()).collect();
    let windowed = |sig: &[f64], s: usize| -> Vec<f64> { (0..frame).map(|i| sig[s + i] * w[i]).collect() };
    let energies: Vec<f64> = starts
        .iter()
        .map(|&s| 20.0 * (windowed(x, s).iter().map(|v| v * v).sum::<f64>().sqrt() + EPS).log10())
        .collect();
    let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energies)
        .filter(|(_, &e)| max - e < dyn_range)
        .map(|(&s, _)| s)
        .collect();
    let len = if kept.is_empty() { 0 } else { (kept.len() - 1) * hop + frame };
    let (mut xo, mut yo) = (vec![0.0; len], vec![0.0; len]);
    for (j, &s) in kept.iter().enumerate() {
        let (xf, yf) = (windowed(x, s), windowed(y, s));
        for i in 0..frame {
            xo[j * hop + i] += xf[i];
            yo[j * hop + i] += yf[i];
        }
    }
    (xo, yo)
}

/// `frames x (nfft/2 + 1)` magnitudes with a Hann window. Like the reference, a
/// frame ending exactly at the last sample is not taken.
fn spectrogram(x: &[f64], frame: usize, hop: usize, nfft: usize) -> Vec<Vec<f64>> {
    let w = hann(frame);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(nfft);
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    (0..)
        .map(|i| i * hop)
        .take_while(|s| s + frame < x.len())
        .map(|s| {
            buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
            for i in 0..frame {
                buf[i].re = x[s + i] * w[i];
            }
            fft.process(&mut buf);
            buf[..nfft / 2 + 1].iter().map(|c| c.norm()).collect()
        })
        .collect()
}

/// Bin ranges `[lo, hi)` of the third-octave bands.
fn third_octave_bands(cfg: &StoiConfig) -> Vec<(usize, usize)> {
    let bins = cfg.nfft / 2 + 1;
    let freq = |k: usize| k as f64 * cfg.rate as f64 / cfg.nfft as f64;
    let closest = |f: f64| {
        (0..bins)
            .min_by(|&a, &b| (freq(a) - f).abs().total_cmp(&(freq(b) - f).abs()))
            .expect("bins")
    };
    (0..cfg.bands)
        .map(|k| {
            let k = k as f64;
            let lo = cfg.min_freq * 2f64.powf((2.0 * k - 1.0) / 6.0);
            let hi = cfg.min_freq * 2f64.powf((2.0 * k + 1.0) / 6.0);
            (closest(lo), closest(hi))
        })
        .collect()
}

fn centred_unit(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let c: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt() + EPS;
    c.iter().map(|x| x / norm).collect()
}

pub fn stoi(clean: &Waveform, degraded: &Waveform) -> Result<f64> {
    stoi_with(clean, degraded, &StoiConfig::default())
}

pub fn stoi_with(clean: &Waveform, degraded: &Waveform, cfg: &StoiConfig) -> Result<f64> {
    ensure!(
        clean.len() == degraded.len(),
        "STOI needs equal lengths, got {} and {}",
        clean.len(),
        degraded.len()
    );
    ensure!(
        clean.sample_rate == degraded.sample_rate,
        "STOI needs equal sample rates, got {} and {}",
        clean.sample_rate,
        degraded.sample_rate
    );
    let x = resample(&clean.samples, clean.sample_rate, cfg.rate);
    let y = resample(&degraded.samples, degraded.sample_rate, cfg.rate);
    let hop = cfg.frame / 2;
    let (x, y) = remove_silent_frames(&x, &y, cfg.dyn_range, cfg.frame, hop);
    let xs = spectrogram(&x, cfg.frame, hop, cfg.nfft);
    let ys = spectrogram(&y, cfg.frame, hop, cfg.nfft);
    if xs.len() < cfg.segment {
        return Err(Error::Contract(format!(
            "STOI needs at least {} active frames ({} ms), got {}",
            cfg.segment,
            (cfg.segment * hop + hop) * 1000 / cfg.rate as usize,
            xs.len()
        )));
    }
    let bands = third_octave_bands(cfg);
    let envelope = |spec: &[Vec<f64>]| -> Vec<Vec<f64>> {
        bands
            .iter()
            .map(|&(lo, hi)| {
                spec.iter()
                    .map(|frame| frame[lo..hi].iter().map(|m| m * m).sum::<f64>().sqrt())
                    .collect()
            })
            .collect()
    };
    let (xb, yb) = (envelope(&xs), envelope(&ys));
    let clip = 10f64.powf(-cfg.beta / 20.0);
    let mut total = 0.0;
    let mut count = 0usize;
    for m in cfg.segment..=xs.len() {
        for (xband, yband) in xb.iter().zip(&yb) {
            let xseg = &xband[m - cfg.segment..m];
            let yseg = &yband[m - cfg.segment..m];
            let xn = xseg.iter().map(|v| v * v).sum::<f64>().sqrt();
            let yn = yseg.iter().map(|v| v * v).sum::<f64>().sqrt();
            let alpha = xn / (yn + EPS);
            let yp: Vec<f64> = yseg
                .iter()
                .zip(xseg)
                .map(|(&yv, &xv)| (alpha * yv).min(xv * (1.0 + clip)))
                .collect();
            let (a, b) = (centred_unit(xseg), centred_unit(&yp));
            total += a.iter().zip(&b).map(|(p, q)| p * q).sum::<f64>();
            count += 1;
        }
    }
    Ok(total / count as f64)
}
