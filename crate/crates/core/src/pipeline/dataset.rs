use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{Manifest, ManifestEntry, Split};
use super::phonemes::{frame_labels, read_phn, PhonemeFolding, PhoneSpan};
use crate::dsp::{
    lps, mfcc, mix_at_snr, power, read_wav, stft, LpsMatrix, Matrix, NormScope, NormStats, Waveform,
    MFCC_DIM, N_BINS, SEGMENT_FRAMES,
};
use crate::error::{ensure, Error, Result};
use crate::par;
use crate::tensor::{Real, Tensor};

/// How utterance features become model segments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureOptions {
    pub segment_len: usize,
    pub norm_scope: NormScope,
    /// z-score MFCC inputs with their own statistics.
    pub norm_mfcc: bool,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            segment_len: SEGMENT_FRAMES,
            norm_scope: NormScope::Segment,
            norm_mfcc: true,
        }
    }
}

/// Mixing recipe for one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixConfig {
    pub snr_levels: Vec<f64>,
    /// Every utterance at every SNR, instead of one sampled SNR.
    pub exhaustive: bool,
}

impl MixConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(!self.snr_levels.is_empty(), "at least one SNR level is required");
        ensure!(
            self.snr_levels.iter().all(|s| s.is_finite()),
            "SNR levels must be finite: {:?}",
            self.snr_levels
        );
        Ok(())
    }
}

/// A clean utterance mixed with noise.
#[derive(Clone, Debug, PartialEq)]
pub struct Mixture {
    /// Clean file stem.
    pub utterance: String,
    pub split: Split,
    pub clean: Waveform,
    pub noisy: Waveform,
    pub snr_db: f64,
    /// Noise file stem.
    pub noise: String,
    pub labels: Option<Vec<PhoneSpan>>,
}

impl Mixture {
    /// `10 log10(P_clean / P_(noisy - clean))`.
    pub fn measured_snr(&self) -> f64 {
        let residual: Vec<f64> = self.noisy.samples.iter().zip(&self.clean.samples).map(|(n, c)| n - c).collect();
        10.0 * (power(&self.clean.samples) / power(&residual)).log10()
    }

    /// Stem used for written mixture files.
    pub fn file_stem(&self) -> String {
        format!("{}_{}_{}dB", self.utterance, self.noise, self.snr_db)
    }
}

pub(crate) fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

struct Job<'a> {
    entry: &'a ManifestEntry,
    noise: usize,
    snr_db: f64,
    seed: u64,
}

/// Mixes every decodable entry of `split` with noise from the split's noise pool.
///
/// Noise file, SNR and crop seed are drawn sequentially from `seed`, so the
/// result does not depend on thread count. Entries whose audio or labels fail
/// to load are skipped with a warning.
pub fn mix_split(manifest: &Manifest, split: Split, cfg: &MixConfig, seed: u64) -> Result<Vec<Mixture>> {
    cfg.validate()?;
    let mut pool: Vec<(String, Waveform)> = Vec::new();
    for path in manifest.noise_pool(split) {
        match read_wav(&path) {
            Ok(w) if w.sample_rate == crate::dsp::SAMPLE_RATE && power(&w.samples) > 0.0 => pool.push((stem(&path), w)),
            Ok(_) => log::warn!("skipping noise {}: not 16 kHz or silent", path.display()),
            Err(e) => log::warn!("skipping noise {}: {}", path.display(), e),
        }
    }
    ensure!(!pool.is_empty(), "no usable noise files in the {} split", split);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jobs = Vec::new();
    for entry in manifest.split(split) {
        let snrs: Vec<f64> = if cfg.exhaustive {
            cfg.snr_levels.clone()
        } else {
            vec![*cfg.snr_levels.choose(&mut rng).expect("validated nonempty")]
        };
        for snr_db in snrs {
            jobs.push(Job {
                entry,
                noise: rng.gen_range(0..pool.len()),
                snr_db,
                seed: rng.gen(),
            });
        }
    }
    let results = par::map(&jobs, |job| -> Result<Mixture> {
        let clean = read_wav(&job.entry.clean)?;
        ensure!(
            clean.sample_rate == crate::dsp::SAMPLE_RATE,
            "{} is {} Hz, expected 16 kHz",
            job.entry.clean.display(),
            clean.sample_rate
        );
        let labels = job.entry.labels.as_ref().map(read_phn).transpose()?;
        let (name, noise) = &pool[job.noise];
        let (noisy, _) = mix_at_snr(&clean, noise, job.snr_db, &mut ChaCha8Rng::seed_from_u64(job.seed))?;
        Ok(Mixture {
            utterance: stem(&job.entry.clean),
            split,
            clean,
            noisy,
            snr_db: job.snr_db,
            noise: name.clone(),
            labels,
        })
    });
    let mut out = Vec::with_capacity(results.len());
    for (job, r) in jobs.iter().zip(results) {
        match r {
            Ok(m) => out.push(m),
            Err(e) => log::warn!("skipping {}: {}", job.entry.clean.display(), e),
        }
    }
    Ok(out)
}

/// Frame-level features of one (noisy, clean) pair.
#[derive(Clone, Debug)]
pub struct UtteranceFeatures {
    pub noisy: LpsMatrix,
    pub mfcc: Matrix,
    pub clean: Option<Matrix>,
    pub clean_mfcc: Option<Matrix>,
}

impl UtteranceFeatures {
    pub fn noisy_only(noisy: &Waveform) -> Result<Self> {
        Ok(UtteranceFeatures {
            noisy: lps(&stft(noisy)?),
            mfcc: mfcc(noisy)?,
            clean: None,
            clean_mfcc: None,
        })
    }

    pub fn pair(noisy: &Waveform, clean: &Waveform) -> Result<Self> {
        ensure!(
            noisy.len() == clean.len(),
            "noisy ({}) and clean ({}) lengths differ",
            noisy.len(),
            clean.len()
        );
        let mut f = Self::noisy_only(noisy)?;
        f.clean = Some(lps(&stft(clean)?).values);
        f.clean_mfcc = Some(mfcc(clean)?);
        Ok(f)
    }

    pub fn frames(&self) -> usize {
        self.noisy.values.rows
    }
}

/// Normalized windows of an utterance with the statistics needed to undo them.
#[derive(Clone, Debug)]
pub struct FeatureSegment {
    /// First frame of the window within the utterance.
    pub start: usize,
    /// Frames of real data; the rest is zero padding.
    pub true_len: usize,
    pub stats: NormStats,
    /// `len x 257` normalized noisy LPS.
    pub noisy: Matrix,
    pub mfcc: Matrix,
    pub clean: Option<Matrix>,
    pub clean_mfcc: Option<Matrix>,
}

/// `(start, true_len)` of each window.
///
/// Windows tile the utterance from frame 0. A partial last window is moved
/// back to end on the last frame, overlapping its predecessor, so only
/// utterances shorter than one window are padded.
pub fn window_starts(frames: usize, len: usize) -> Vec<(usize, usize)> {
    if frames <= len {
        return vec![(0, frames)];
    }
    let mut out: Vec<(usize, usize)> = (0..frames / len).map(|i| (i * len, len)).collect();
    if frames % len != 0 {
        out.push((frames - len, len));
    }
    out
}

/// Splits into `opts.segment_len` windows (see [`window_starts`]). Clean LPS
/// uses the noisy statistics; clean MFCCs use the noisy MFCC statistics.
pub fn segment_features(f: &UtteranceFeatures, opts: &FeatureOptions) -> Result<Vec<FeatureSegment>> {
    ensure!(opts.segment_len >= 1, "segment length must be positive");
    ensure!(
        f.mfcc.rows == f.frames(),
        "MFCC has {} frames but LPS has {}",
        f.mfcc.rows,
        f.frames()
    );
    let len = opts.segment_len;
    let frames = f.frames();
    let utt_stats = (
        NormStats::from_rows(&f.noisy.values, frames),
        NormStats::from_rows(&f.mfcc, frames),
    );
    Ok(window_starts(frames, len)
        .into_iter()
        .map(|(start, true_len)| {
            let window = f.noisy.values.rows_padded(start, len);
            let mwindow = f.mfcc.rows_padded(start, len);
            let (stats, mstats) = match opts.norm_scope {
                NormScope::Segment => (NormStats::from_rows(&window, true_len), NormStats::from_rows(&mwindow, true_len)),
                NormScope::Utterance => utt_stats.clone(),
            };
            let mstats = if opts.norm_mfcc { mstats } else { NormStats::identity(f.mfcc.cols) };
            FeatureSegment {
                start,
                true_len,
                noisy: stats.normalize(&window, true_len),
                mfcc: mstats.normalize(&mwindow, true_len),
                clean: f.clean.as_ref().map(|c| stats.normalize(&c.rows_padded(start, len), true_len)),
                clean_mfcc: f.clean_mfcc.as_ref().map(|c| mstats.normalize(&c.rows_padded(start, len), true_len)),
                stats,
            }
        })
        .collect())
}

/// One training example, channels-first `f32`.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentPair {
    pub utterance: String,
    pub segment: usize,
    pub true_len: usize,
    pub snr_db: f64,
    pub len: usize,
    /// `257 x len`.
    pub noisy: Vec<f32>,
    pub clean: Vec<f32>,
    /// `39 x len`.
    pub mfcc: Vec<f32>,
    pub clean_mfcc: Vec<f32>,
    /// Folded class per frame; padded frames get the `other` class.
    pub labels: Option<Vec<usize>>,
}

/// `rows x cols` row-major to `cols x rows`.
pub(crate) fn channels_first<T: Real>(m: &Matrix) -> Vec<T> {
    let mut out = vec![T::zero(); m.data.len()];
    for r in 0..m.rows {
        for c in 0..m.cols {
            out[c * m.rows + r] = T::lit(m.get(r, c));
        }
    }
    out
}

pub(crate) fn from_channels_first<T: Real>(data: &[T], channels: usize, frames: usize) -> Matrix {
    let mut m = Matrix::zeros(frames, channels);
    for c in 0..channels {
        for t in 0..frames {
            m.row_mut(t)[c] = data[c * frames + t].as_f64();
        }
    }
    m
}

/// Features and segments of one mixture.
pub fn mixture_segments(m: &Mixture, opts: &FeatureOptions, folding: &PhonemeFolding) -> Result<Vec<SegmentPair>> {
    let feats = UtteranceFeatures::pair(&m.noisy, &m.clean)?;
    let frames = feats.frames();
    let labels = m.labels.as_ref().map(|spans| frame_labels(spans, m.clean.len(), folding));
    if let Some(l) = &labels {
        ensure!(l.len() == frames, "{}: {} labels for {} frames", m.utterance, l.len(), frames);
    }
    let segments = segment_features(&feats, opts)?;
    Ok(segments
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let start = s.start;
            SegmentPair {
                utterance: m.utterance.clone(),
                segment: i,
                true_len: s.true_len,
                snr_db: m.snr_db,
                len: opts.segment_len,
                noisy: channels_first(&s.noisy),
                clean: channels_first(s.clean.as_ref().expect("pair has clean")),
                mfcc: channels_first(&s.mfcc),
                clean_mfcc: channels_first(s.clean_mfcc.as_ref().expect("pair has clean")),
                labels: labels.as_ref().map(|l| {
                    (0..opts.segment_len)
                        .map(|t| l.get(start + t).copied().unwrap_or(folding.other()))
                        .collect()
                }),
            }
        })
        .collect())
}

/// Full dataset recipe for one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub mix: MixConfig,
    pub features: FeatureOptions,
    pub seed: u64,
}

/// Mix, extract and segment every entry of `split`; deterministic under a fixed seed.
pub fn build_dataset(
    manifest: &Manifest,
    split: Split,
    cfg: &DatasetConfig,
    folding: &PhonemeFolding,
) -> Result<Vec<SegmentPair>> {
    ensure!(manifest.split(split).next().is_some(), "the {} split of the manifest is empty", split);
    let mixtures = mix_split(manifest, split, &cfg.mix, cfg.seed)?;
    let per_utt = par::map(&mixtures, |m| mixture_segments(m, &cfg.features, folding));
    let mut out = Vec::new();
    for (m, r) in mixtures.iter().zip(per_utt) {
        match r {
            Ok(s) => out.extend(s),
            Err(e) => log::warn!("skipping {}: {}", m.utterance, e),
        }
    }
    if out.is_empty() {
        return Err(Error::Format(format!("no segments could be built from the {} split", split)));
    }
    Ok(out)
}

/// Stacks segment pairs into model-ready tensors.
pub struct Batch<T> {
    /// `[B, 257, T]`.
    pub noisy: Tensor<T>,
    pub clean: Tensor<T>,
    /// `[B, 39, T]`.
    pub mfcc: Tensor<T>,
    pub clean_mfcc: Tensor<T>,
    pub labels: Option<Vec<usize>>,
}

pub fn make_batch<T: Real>(pairs: &[&SegmentPair]) -> Result<Batch<T>> {
    ensure!(!pairs.is_empty(), "empty batch");
    let len = pairs[0].len;
    ensure!(pairs.iter().all(|p| p.len == len), "segments in a batch differ in length");
    let stack = |get: &dyn Fn(&SegmentPair) -> &[f32], ch: usize| -> Result<Tensor<T>> {
        let mut data = Vec::with_capacity(pairs.len() * ch * len);
        for p in pairs {
            data.extend(get(p).iter().map(|&v| T::lit(v as f64)));
        }
        Tensor::new(&[pairs.len(), ch, len], data)
    };
    let labels = if pairs.iter().all(|p| p.labels.is_some()) {
        Some(pairs.iter().flat_map(|p| p.labels.clone().unwrap()).collect())
    } else {
        None
    };
    Ok(Batch {
        noisy: stack(&|p| &p.noisy, N_BINS)?,
        clean: stack(&|p| &p.clean, N_BINS)?,
        mfcc: stack(&|p| &p.mfcc, MFCC_DIM)?,
        clean_mfcc: stack(&|p| &p.clean_mfcc, MFCC_DIM)?,
        labels,
    })
}
