//! Corpus mixing, segment datasets, training, checkpoints and enhancement.

pub mod checkpoint;
pub mod dataset;
pub mod enhance;
pub mod interpret;
pub mod manifest;
pub mod phonemes;
pub mod synth;
pub mod train;

pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use dataset::{
    build_dataset, make_batch, mix_split, mixture_segments, segment_features, window_starts, Batch, DatasetConfig, FeatureOptions,
    FeatureSegment, MixConfig, Mixture, SegmentPair, UtteranceFeatures,
};
pub use enhance::{enhance_utterance, Identity, SegmentEnhancer, TrainedModel};
pub use interpret::{token_sequences, utterance_tokens, TokenSequence};
pub use manifest::{Manifest, ManifestEntry, Split};
pub use phonemes::{format_phn, frame_labels, parse_phn, read_phn, PhoneSpan, PhonemeFolding, OTHER};
pub use synth::{synth_corpus, synth_noise, synth_utterance, NoiseKind, SynthConfig};
pub use train::{
    epoch_log_csv, step_log_csv, train, write_log_csv, EarlyStopping, EpochLog, StepLog, TrainConfig, TrainOutcome, Trainer,
};
