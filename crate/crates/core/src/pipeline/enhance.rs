use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::dataset::{channels_first, from_channels_first, segment_features, FeatureOptions, FeatureSegment, UtteranceFeatures};
use crate::dsp::{istft_overlap_add, lps_to_spectrogram, Matrix, Waveform, MFCC_DIM, N_BINS, SAMPLE_RATE};
use crate::error::{ensure, Result};
use crate::model::{model_forward, ModelConfig, ModelInput, Quantizer};
use crate::par;
use crate::tensor::{ParamStore, Tape, Tensor};
use crate::vq::SymbolicBook;

/// Maps one normalized segment (`len x 257` LPS plus MFCCs) to an enhanced one.
pub trait SegmentEnhancer: Sync {
    fn enhance_segment(&self, segment: &FeatureSegment) -> Result<Matrix>;
}

/// Passes the noisy features through unchanged.
pub struct Identity;

impl SegmentEnhancer for Identity {
    fn enhance_segment(&self, segment: &FeatureSegment) -> Result<Matrix> {
        Ok(segment.noisy.clone())
    }
}

/// A frozen checkpoint in inference mode.
pub struct TrainedModel {
    pub model: ModelConfig,
    pub features: FeatureOptions,
    pub params: ParamStore<f32>,
    pub book: Option<SymbolicBook<f32>>,
}

impl TrainedModel {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.check_against(&ckpt.model)?;
        Ok(TrainedModel {
            model: ckpt.model.clone(),
            features: ckpt.features.clone(),
            params: ckpt.params.clone(),
            book: ckpt.book.clone(),
        })
    }

    /// Runs the model on one segment and returns the token sequence too.
    pub fn forward_segment(&self, segment: &FeatureSegment) -> Result<(Matrix, Vec<usize>)> {
        let len = segment.noisy.rows;
        ensure!(
            segment.noisy.cols == N_BINS && segment.mfcc.cols == MFCC_DIM,
            "segment features must be {} LPS bins and {} MFCCs",
            N_BINS,
            MFCC_DIM
        );
        let input = ModelInput {
            noisy: Tensor::new(&[1, N_BINS, len], channels_first(&segment.noisy))?,
            mfcc: Some(Tensor::new(&[1, MFCC_DIM, len], channels_first(&segment.mfcc))?),
            labels: None,
        };
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let quantizer = self.book.as_ref().map(Quantizer::Book);
        // Inference draws no random numbers; the RNG only satisfies the signature.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fwd = model_forward(&mut tape, &p, &self.model, &input, quantizer, false, &mut rng)?;
        let out = from_channels_first(tape.value(fwd.enhanced).data(), N_BINS, len);
        let tokens = fwd.symbolic.map(|s| s.indices).unwrap_or_default();
        Ok((out, tokens))
    }
}

impl SegmentEnhancer for TrainedModel {
    fn enhance_segment(&self, segment: &FeatureSegment) -> Result<Matrix> {
        Ok(self.forward_segment(segment)?.0)
    }
}

/// Analysis, per-segment enhancement, denormalization and noisy-phase resynthesis.
///
/// The output has exactly the input's length.
pub fn enhance_utterance<E: SegmentEnhancer + ?Sized>(noisy: &Waveform, enhancer: &E, opts: &FeatureOptions) -> Result<Waveform> {
    noisy.require_rate(SAMPLE_RATE)?;
    ensure!(!noisy.is_empty(), "cannot enhance an empty signal");
    let feats = UtteranceFeatures::noisy_only(noisy)?;
    let segments = segment_features(&feats, opts)?;
    let enhanced = par::map(&segments, |s| enhancer.enhance_segment(s).map(|m| s.stats.denormalize(&m)));
    let frames = feats.frames();
    let mut values = Matrix::zeros(frames, N_BINS);
    // Frames shared with an earlier window keep that window's output.
    let mut covered = 0;
    for (window, out) in segments.iter().zip(enhanced) {
        let out = out?;
        ensure!(out.cols == N_BINS, "enhancer returned {} bins, expected {}", out.cols, N_BINS);
        for frame in covered.max(window.start)..window.start + window.true_len {
            values.row_mut(frame).copy_from_slice(out.row(frame - window.start));
        }
        covered = window.start + window.true_len;
    }
    let spec = lps_to_spectrogram(&values, &feats.noisy.phase, noisy.len())?;
    let out = istft_overlap_add(&spec)?;
    ensure!(out.len() == noisy.len(), "resynthesis produced {} samples for {}", out.len(), noisy.len());
    Ok(out)
}
