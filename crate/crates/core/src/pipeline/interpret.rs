use super::dataset::{segment_features, FeatureOptions, Mixture, UtteranceFeatures};
use super::enhance::TrainedModel;
use super::phonemes::{frame_labels, PhonemeFolding};
use crate::error::{ensure, Error, Result};
use crate::par;

/// Token chosen by the symbolic encoder for every frame of `noisy`.
pub fn utterance_tokens(model: &TrainedModel, noisy: &crate::dsp::Waveform, opts: &FeatureOptions) -> Result<Vec<usize>> {
    ensure!(
        model.model.variant.uses_book(),
        "variant {} has no symbolic book to interpret",
        model.model.variant.name()
    );
    let feats = UtteranceFeatures::noisy_only(noisy)?;
    let mut tokens = Vec::with_capacity(feats.frames());
    for seg in segment_features(&feats, opts)? {
        let (_, t) = model.forward_segment(&seg)?;
        let skip = tokens.len() - seg.start;
        tokens.extend_from_slice(&t[skip..seg.true_len]);
    }
    Ok(tokens)
}

/// Tokens and folded frame labels of one labeled mixture.
pub struct TokenSequence {
    pub utterance: String,
    pub tokens: Vec<usize>,
    pub labels: Vec<usize>,
}

/// Runs the symbolic encoder over each labeled mixture; unlabeled ones are an error.
pub fn token_sequences(
    model: &TrainedModel,
    mixtures: &[Mixture],
    opts: &FeatureOptions,
    folding: &PhonemeFolding,
) -> Result<Vec<TokenSequence>> {
    par::map(mixtures, |m| {
        let spans = m
            .labels
            .as_ref()
            .ok_or_else(|| Error::Format(format!("{} has no phoneme labels", m.utterance)))?;
        Ok(TokenSequence {
            utterance: m.utterance.clone(),
            tokens: utterance_tokens(model, &m.noisy, opts)?,
            labels: frame_labels(spans, m.noisy.len(), folding),
        })
    })
    .into_iter()
    .collect()
}
