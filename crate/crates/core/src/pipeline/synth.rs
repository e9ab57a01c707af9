//! Desk-scale synthetic corpus: formant-shaped harmonic "vowels", band-noise
//! "fricatives" and low-formant "nasals" with TIMIT-style phone labels, plus
//! a handful of stationary and non-stationary noise types.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{Manifest, ManifestEntry, Split};
use super::phonemes::{format_phn, PhoneSpan};
use crate::dsp::{write_wav, Waveform, SAMPLE_RATE};
use crate::error::{ensure, Error, Result};

const FS: f64 = SAMPLE_RATE as f64;

#[derive(Clone, Copy, Debug)]
enum Source {
    /// Harmonics of f0 shaped by `(frequency, bandwidth, gain)` resonances.
    Voiced(&'static [(f64, f64, f64)]),
    /// White noise through a band-pass at `(centre, q)`.
    Noise(f64, f64),
}

#[derive(Clone, Copy, Debug)]
struct Phone {
    symbol: &'static str,
    source: Source,
    level: f64,
}

/// Inventory ordered so that any prefix is acoustically diverse.
const PHONES: &[Phone] = &[
    Phone { symbol: "aa", source: Source::Voiced(&[(730.0, 90.0, 1.0), (1090.0, 110.0, 0.5), (2440.0, 170.0, 0.2)]), level: 1.0 },
    Phone { symbol: "s", source: Source::Noise(6000.0, 2.0), level: 0.35 },
    Phone { symbol: "m", source: Source::Voiced(&[(250.0, 60.0, 1.0), (1000.0, 200.0, 0.05), (2200.0, 250.0, 0.03)]), level: 0.5 },
    Phone { symbol: "iy", source: Source::Voiced(&[(270.0, 60.0, 1.0), (2290.0, 120.0, 0.4), (3010.0, 180.0, 0.3)]), level: 0.9 },
    Phone { symbol: "sh", source: Source::Noise(2800.0, 2.5), level: 0.4 },
    Phone { symbol: "uw", source: Source::Voiced(&[(300.0, 60.0, 1.0), (870.0, 90.0, 0.4), (2240.0, 170.0, 0.05)]), level: 0.9 },
    Phone { symbol: "n", source: Source::Voiced(&[(250.0, 60.0, 1.0), (1700.0, 200.0, 0.08), (2600.0, 250.0, 0.05)]), level: 0.5 },
    Phone { symbol: "f", source: Source::Noise(4500.0, 0.6), level: 0.2 },
    Phone { symbol: "ae", source: Source::Voiced(&[(660.0, 90.0, 1.0), (1720.0, 120.0, 0.6), (2410.0, 170.0, 0.3)]), level: 1.0 },
    Phone { symbol: "er", source: Source::Voiced(&[(490.0, 80.0, 1.0), (1350.0, 110.0, 0.7), (1690.0, 150.0, 0.5)]), level: 0.9 },
    Phone { symbol: "eh", source: Source::Voiced(&[(530.0, 80.0, 1.0), (1840.0, 120.0, 0.5), (2480.0, 170.0, 0.3)]), level: 1.0 },
    Phone { symbol: "ow", source: Source::Voiced(&[(570.0, 80.0, 1.0), (840.0, 90.0, 0.7), (2410.0, 170.0, 0.1)]), level: 1.0 },
];

pub const MAX_CLASSES: usize = PHONES.len();

/// Phone symbols used when the corpus is limited to `classes` classes.
pub fn phone_symbols(classes: usize) -> Vec<&'static str> {
    PHONES.iter().take(classes).map(|p| p.symbol).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    White,
    Pink,
    Brown,
    Babble,
    Hum,
    Machine,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 6] = [
        NoiseKind::White,
        NoiseKind::Pink,
        NoiseKind::Babble,
        NoiseKind::Hum,
        NoiseKind::Brown,
        NoiseKind::Machine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::Pink => "pink",
            NoiseKind::Brown => "brown",
            NoiseKind::Babble => "babble",
            NoiseKind::Hum => "hum",
            NoiseKind::Machine => "machine",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    pub n_noise: usize,
    /// How many phone classes (from the front of the inventory) to use.
    pub classes: usize,
    pub min_phones: usize,
    pub max_phones: usize,
    pub noise_secs: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_train: 20,
            n_valid: 2,
            n_test: 2,
            n_noise: 6,
            classes: MAX_CLASSES,
            min_phones: 6,
            max_phones: 12,
            noise_secs: 4.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.n_train >= 1, "synthetic corpus needs at least one training utterance");
        ensure!(self.n_noise >= 1, "synthetic corpus needs at least one noise file");
        ensure!(
            (1..=MAX_CLASSES).contains(&self.classes),
            "classes must lie in 1..={}, got {}",
            MAX_CLASSES,
            self.classes
        );
        ensure!(
            self.min_phones >= 1 && self.min_phones <= self.max_phones,
            "phone count range {}..={} is empty",
            self.min_phones,
            self.max_phones
        );
        ensure!(self.noise_secs > 0.0, "noise duration must be positive");
        Ok(())
    }
}

/// RBJ band-pass biquad (constant 0 dB peak gain).
fn bandpass(x: &[f64], centre: f64, q: f64) -> Vec<f64> {
    let w0 = 2.0 * PI * centre / FS;
    let alpha = w0.sin() / (2.0 * q);
    let a0 = 1.0 + alpha;
    let (b0, b2) = (alpha / a0, -alpha / a0);
    let (a1, a2) = (-2.0 * w0.cos() / a0, (1.0 - alpha) / a0);
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    x.iter()
        .map(|&v| {
            let y = b0 * v + b2 * x2 - a1 * y1 - a2 * y2;
            x2 = x1;
            x1 = v;
            y2 = y1;
            y1 = y;
            y
        })
        .collect()
}

fn resonance_gain(f: f64, formants: &[(f64, f64, f64)]) -> f64 {
    formants
        .iter()
        .map(|&(fc, bw, g)| g / (1.0 + ((f - fc) / bw).powi(2)))
        .sum()
}

/// Raised-cosine fade in/out over `ramp` samples.
fn envelope(n: usize, i: usize, ramp: usize) -> f64 {
    let r = ramp.min(n / 2).max(1);
    let edge = i.min(n - 1 - i);
    if edge >= r {
        1.0
    } else {
        0.5 - 0.5 * (PI * edge as f64 / r as f64).cos()
    }
}

fn unit_rms(x: &mut [f64]) {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|v| *v /= rms);
    }
}

/// Renders one phone of `n` samples starting at absolute sample `offset`.
fn render_phone<R: Rng + ?Sized>(phone: &Phone, n: usize, offset: usize, f0: f64, rng: &mut R) -> Vec<f64> {
    let mut out = match phone.source {
        Source::Voiced(formants) => {
            let harmonics = ((7000.0 / f0) as usize).max(1);
            let gains: Vec<f64> = (1..=harmonics)
                .map(|h| resonance_gain(h as f64 * f0, formants) / (h as f64).sqrt())
                .collect();
            (0..n)
                .map(|i| {
                    let t = (offset + i) as f64 / FS;
                    let phase = 2.0 * PI * f0 * t;
                    gains.iter().enumerate().map(|(h, g)| g * ((h + 1) as f64 * phase).sin()).sum()
                })
                .collect()
        }
        Source::Noise(centre, q) => {
            let white: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            bandpass(&white, centre, q)
        }
    };
    unit_rms(&mut out);
    let ramp = (0.01 * FS) as usize;
    for (i, v) in out.iter_mut().enumerate() {
        *v *= phone.level * envelope(n, i, ramp);
    }
    out
}

/// One utterance: silence, a random phone sequence, silence. Returns samples and labels.
pub fn synth_utterance<R: Rng + ?Sized>(rng: &mut R, classes: usize, phones: (usize, usize)) -> (Vec<f64>, Vec<PhoneSpan>) {
    let inventory = &PHONES[..classes.clamp(1, MAX_CLASSES)];
    let f0 = rng.gen_range(90.0..220.0);
    let lead = rng.gen_range(0.08..0.2);
    let mut spans = Vec::new();
    let mut samples = vec![0.0; (lead * FS) as usize];
    spans.push(PhoneSpan {
        start: 0,
        end: samples.len(),
        symbol: "h#".into(),
    });
    let count = rng.gen_range(phones.0..=phones.1);
    let mut prev = usize::MAX;
    for _ in 0..count {
        let mut k = rng.gen_range(0..inventory.len());
        if inventory.len() > 1 && k == prev {
            k = (k + 1) % inventory.len();
        }
        prev = k;
        let n = (rng.gen_range(0.08..0.18) * FS) as usize;
        let start = samples.len();
        samples.extend(render_phone(&inventory[k], n, start, f0, rng));
        spans.push(PhoneSpan {
            start,
            end: start + n,
            symbol: inventory[k].symbol.into(),
        });
    }
    let tail = (rng.gen_range(0.08..0.2) * FS) as usize;
    let start = samples.len();
    samples.resize(start + tail, 0.0);
    spans.push(PhoneSpan {
        start,
        end: samples.len(),
        symbol: "h#".into(),
    });
    let gain = 0.1 * 10f64.powf(rng.gen_range(-6.0..6.0) / 20.0);
    for v in samples.iter_mut() {
        // A -80 dB floor keeps silent frames away from the log floor.
        *v = *v * gain + rng.gen_range(-1e-4..1e-4);
    }
    (samples, spans)
}

/// `n` samples of the given noise type at unit RMS, scaled to 0.1.
pub fn synth_noise<R: Rng + ?Sized>(kind: NoiseKind, n: usize, rng: &mut R) -> Vec<f64> {
    let mut white = || -> f64 { rng.gen_range(-1.0..1.0) };
    let mut x: Vec<f64> = match kind {
        NoiseKind::White => (0..n).map(|_| white()).collect(),
        NoiseKind::Pink => {
            // Paul Kellet's economy pink filter.
            let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
            (0..n)
                .map(|_| {
                    let w = white();
                    b0 = 0.99765 * b0 + w * 0.0990460;
                    b1 = 0.96300 * b1 + w * 0.2965164;
                    b2 = 0.57000 * b2 + w * 1.0526913;
                    b0 + b1 + b2 + w * 0.1848
                })
                .collect()
        }
        NoiseKind::Brown => {
            let mut acc = 0.0;
            (0..n)
                .map(|_| {
                    acc = 0.995 * acc + 0.1 * white();
                    acc
                })
                .collect()
        }
        NoiseKind::Hum => {
            // Mains harmonics with drifting level and a broadband floor; a
            // perfectly steady hum has near-zero spectral variance.
            let f = if rng.gen_bool(0.5) { 50.0 } else { 60.0 };
            let (rate, depth) = (rng.gen_range(0.5..2.0), rng.gen_range(0.3..0.6));
            (0..n)
                .map(|i| {
                    let t = i as f64 / FS;
                    let level = 1.0 + depth * (2.0 * PI * rate * t).sin();
                    level * (1..=8).map(|h| (2.0 * PI * f * h as f64 * t).sin() / h as f64).sum::<f64>()
                        + 0.3 * rng.gen_range(-1.0..1.0)
                })
                .collect()
        }
        NoiseKind::Machine => {
            let white: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let band = bandpass(&white, rng.gen_range(400.0..1500.0), 1.5);
            let rate = rng.gen_range(4.0..12.0);
            band.iter()
                .enumerate()
                .map(|(i, v)| v * (1.0 + 0.8 * (2.0 * PI * rate * i as f64 / FS).sin()))
                .collect()
        }
        NoiseKind::Babble => {
            let mut mix = vec![0.0; n];
            for _ in 0..6 {
                let (voice, _) = synth_utterance(rng, MAX_CLASSES, (40, 40));
                for (i, m) in mix.iter_mut().enumerate() {
                    *m += voice[i % voice.len()];
                }
            }
            mix
        }
    };
    unit_rms(&mut x);
    x.iter_mut().for_each(|v| *v *= 0.1);
    x
}

/// Writes `clean/`, `noise/`, `labels/` and `manifest.tsv` under `out`.
///
/// Every training, validation and test entry lists one noise file; noise files
/// are split between training and held-out entries when there are at least two.
pub fn synth_corpus(out: &Path, cfg: &SynthConfig) -> Result<PathBuf> {
    cfg.validate()?;
    for dir in ["clean", "noise", "labels"] {
        std::fs::create_dir_all(out.join(dir)).map_err(|e| Error::io(out.join(dir), e))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise_len = (cfg.noise_secs * FS) as usize;
    let mut noise_paths = Vec::with_capacity(cfg.n_noise);
    for i in 0..cfg.n_noise {
        let kind = NoiseKind::ALL[i % NoiseKind::ALL.len()];
        let path = out.join("noise").join(format!("noise_{:03}_{}.wav", i, kind.name()));
        write_wav(&path, &Waveform::new(synth_noise(kind, noise_len, &mut rng), SAMPLE_RATE)?)?;
        noise_paths.push(path);
    }
    let splits = [(Split::Train, cfg.n_train), (Split::Valid, cfg.n_valid), (Split::Test, cfg.n_test)];
    let mut entries = Vec::new();
    let mut index = 0;
    for (split, n) in splits {
        for _ in 0..n {
            let (samples, spans) = synth_utterance(&mut rng, cfg.classes, (cfg.min_phones, cfg.max_phones));
            let stem = format!("utt_{:04}", index);
            let clean = out.join("clean").join(format!("{stem}.wav"));
            let labels = out.join("labels").join(format!("{stem}.phn"));
            write_wav(&clean, &Waveform::new(samples, SAMPLE_RATE)?)?;
            std::fs::write(&labels, format_phn(&spans)).map_err(|e| Error::io(&labels, e))?;
            entries.push(ManifestEntry {
                split,
                clean,
                noise: Some(noise_paths[index % noise_paths.len()].clone()),
                labels: Some(labels),
            });
            index += 1;
        }
    }
    let manifest = Manifest { entries };
    let path = out.join("manifest.tsv");
    std::fs::write(&path, manifest.to_tsv(out)).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
