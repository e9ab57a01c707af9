//! Signal processing front and back end.
//!
//! All analysis uses 16 kHz audio, a 512-sample periodic Hamming window, a
//! 256-sample hop and a 512-point FFT (257 bins). Every function here is pure.

mod matrix;
mod mfcc;
mod mix;
mod segment;
mod stft;
mod wav;

pub use matrix::Matrix;
pub use mfcc::{deltas, dct_ortho, mel_filterbank, mfcc, MFCC_DIM, N_CEPS, N_MELS};
pub use mix::{mix_at_snr, power, MixInfo};
pub use segment::{segment, split_segments, NormScope, NormStats, Segment, NORM_EPS};
pub use stft::{
    frame_count, hamming, istft_overlap_add, lps, lps_to_spectrogram, stft, ComplexSpectrogram,
    LpsMatrix, LPS_FLOOR,
};
pub use wav::{read_wav, write_wav};
pub use rustfft::num_complex::Complex64;

use crate::error::{ensure, Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;
pub const FFT_SIZE: usize = 512;
pub const WIN_LEN: usize = 512;
pub const HOP: usize = 256;
pub const N_BINS: usize = FFT_SIZE / 2 + 1;
/// Frames per model input segment.
pub const SEGMENT_FRAMES: usize = 64;

/// Mono audio with its sample rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        ensure!(sample_rate > 0, "sample rate must be positive");
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::Contract(format!("non-finite sample at index {}", i)));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub(crate) fn require_rate(&self, rate: u32) -> Result<()> {
        ensure!(
            self.sample_rate == rate,
            "expected {} Hz audio, got {} Hz",
            rate,
            self.sample_rate
        );
        Ok(())
    }
}
