//! Objective scores and token interpretation.

pub mod interp;
pub mod plots;
pub mod ssnr;
pub mod stoi;

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub use interp::{js_divergence, js_matrix, token_histograms, JsMatrix, LabeledTokens, PhonemeHistogram};
pub use plots::{emit_plots, heatmap_svg, histogram_svg};
pub use ssnr::{segmental_snr, SSNR_MAX, SSNR_MIN};
pub use stoi::{resample, stoi, stoi_with, StoiConfig};

/// One line of `scores.csv`; unknown fields are left empty.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreRow {
    pub utterance: String,
    pub snr_db: Option<f64>,
    pub noise: Option<String>,
    pub stoi_noisy: Option<f64>,
    pub stoi_enhanced: f64,
    pub ssnr_noisy: Option<f64>,
    pub ssnr_enhanced: f64,
}

pub fn scores_csv(rows: &[ScoreRow]) -> String {
    fn opt<T: ToString>(v: &Option<T>) -> String {
        v.as_ref().map(ToString::to_string).unwrap_or_default()
    }
    let mut s = String::from("utterance,snr_db,noise,stoi_noisy,stoi_enhanced,ssnr_noisy,ssnr_enhanced\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.utterance,
            opt(&r.snr_db),
            opt(&r.noise),
            opt(&r.stoi_noisy),
            r.stoi_enhanced,
            opt(&r.ssnr_noisy),
            r.ssnr_enhanced
        );
    }
    s
}

pub fn write_scores(path: impl AsRef<Path>, rows: &[ScoreRow]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, scores_csv(rows)).map_err(|e| Error::io(path, e))
}
