use serde::{Deserialize, Serialize};

use crate::attention::MhaConfig;
use crate::error::{ensure, Result};
use crate::vq::VqConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// U-Net alone: no symbolic path.
    Unet,
    /// U-Net on LPS plus MFCC, with an auxiliary clean-MFCC head.
    UnetMol,
    /// Quantized symbolic encoder attended by every decoder layer.
    #[default]
    Proposed,
    /// Symbolic path fed by learned phoneme embeddings instead of quantized MFCC encodings.
    Oracle,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Unet, Variant::UnetMol, Variant::Proposed, Variant::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Unet => "unet",
            Variant::UnetMol => "unet-mol",
            Variant::Proposed => "proposed",
            Variant::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.name() == s)
    }

    /// Whether the decoder attends to a symbolic sequence.
    pub fn has_symbolic(self) -> bool {
        matches!(self, Variant::Proposed | Variant::Oracle)
    }

    pub fn uses_book(self) -> bool {
        self == Variant::Proposed
    }
}

/// Architecture hyperparameters.
///
/// Filter widths and channel counts are placeholders for values that only
/// appear in the original architecture figure; every field is configurable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Frequency bins of the LPS input and output.
    pub n_bins: usize,
    pub mfcc_dim: usize,
    /// Frames per segment; must be divisible by `2^L`.
    pub segment_len: usize,
    pub enc_widths: Vec<usize>,
    pub enc_channels: Vec<usize>,
    pub dec_widths: Vec<usize>,
    pub leaky_slope: f64,
    pub sym_hidden: usize,
    pub sym_layers: usize,
    pub dropout: f64,
    pub context_width: usize,
    pub context_channels: usize,
    pub vq: VqConfig,
    pub mha: MhaConfig,
    pub mol_weight: f64,
    /// Rows of the phoneme embedding table (oracle variant).
    pub n_phonemes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::Proposed,
            n_bins: crate::dsp::N_BINS,
            mfcc_dim: crate::dsp::MFCC_DIM,
            segment_len: crate::dsp::SEGMENT_FRAMES,
            enc_widths: vec![7, 7, 5, 5],
            enc_channels: vec![64, 128, 256, 256],
            dec_widths: vec![5, 7, 9, 11],
            leaky_slope: 0.2,
            sym_hidden: 256,
            sym_layers: 4,
            dropout: 0.2,
            context_width: 3,
            context_channels: 64,
            vq: VqConfig::default(),
            mha: MhaConfig::default(),
            mol_weight: 1.0,
            n_phonemes: 40,
        }
    }
}

impl ModelConfig {
    /// L=3, channels [32, 64, 64], a 16-token book.
    pub fn reduced(variant: Variant) -> Self {
        ModelConfig {
            variant,
            enc_widths: vec![7, 7, 5],
            enc_channels: vec![32, 64, 64],
            dec_widths: vec![5, 7, 9],
            vq: VqConfig {
                book_size: 16,
                ..VqConfig::default()
            },
            ..ModelConfig::default()
        }
    }

    /// L=2 with 8 channels, M=4, D=4 and 8-frame segments: small enough for
    /// exhaustive finite-difference checks.
    pub fn miniature(variant: Variant) -> Self {
        ModelConfig {
            variant,
            segment_len: 8,
            enc_widths: vec![3, 3],
            enc_channels: vec![8, 8],
            dec_widths: vec![3, 5],
            sym_hidden: 16,
            context_channels: 8,
            vq: VqConfig {
                book_size: 4,
                dim: 4,
                ..VqConfig::default()
            },
            mha: MhaConfig {
                heads: 2,
                key_dim: 8,
                value_dim: 8,
                positional: true,
            },
            ..ModelConfig::default()
        }
    }

    pub fn layers(&self) -> usize {
        self.enc_channels.len()
    }

    /// Output channels of decoder layer `i` (0-based): the encoder channels in reverse.
    pub fn dec_channels(&self, i: usize) -> usize {
        let l = self.layers();
        if i + 1 >= l {
            self.enc_channels[0]
        } else {
            self.enc_channels[l - 2 - i]
        }
    }

    /// Channels entering the first encoder layer.
    pub fn input_channels(&self) -> usize {
        match self.variant {
            Variant::UnetMol => self.n_bins + self.mfcc_dim,
            _ => self.n_bins,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.layers();
        ensure!(l >= 1, "model needs at least one encoder layer");
        ensure!(
            self.enc_widths.len() == l && self.dec_widths.len() == l,
            "encoder widths ({}), channels ({}) and decoder widths ({}) must have equal length",
            self.enc_widths.len(),
            l,
            self.dec_widths.len()
        );
        ensure!(
            self.enc_channels.iter().chain(&self.enc_widths).chain(&self.dec_widths).all(|&c| c > 0),
            "channels and widths must be positive"
        );
        ensure!(
            self.segment_len > 0 && self.segment_len % (1 << l) == 0,
            "segment length {} not divisible by 2^{}",
            self.segment_len,
            l
        );
        ensure!(self.n_bins > 0 && self.mfcc_dim > 0, "feature sizes must be positive");
        ensure!(self.leaky_slope > 0.0 && self.leaky_slope < 1.0, "leaky slope must lie in (0, 1)");
        ensure!((0.0..1.0).contains(&self.dropout), "dropout must lie in [0, 1)");
        ensure!(self.sym_layers >= 1 && self.sym_hidden >= 1, "symbolic encoder needs at least one hidden layer");
        ensure!(self.context_width >= 1 && self.context_channels >= 1, "context conv must have positive width and channels");
        ensure!(self.n_phonemes >= 1, "phoneme table needs at least one row");
        ensure!(self.mol_weight >= 0.0, "auxiliary weight must be non-negative");
        self.vq.validate()?;
        if self.variant.has_symbolic() {
            self.mha.validate()?;
        }
        Ok(())
    }
}
