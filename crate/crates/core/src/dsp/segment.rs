use serde::{Deserialize, Serialize};

use super::Matrix;

/// Lower bound on per-dimension standard deviations.
pub const NORM_EPS: f64 = 1e-8;

/// Which frames contribute to normalization statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormScope {
    /// Each segment uses statistics of its own (unpadded) frames.
    #[default]
    Segment,
    /// All segments of an utterance share the utterance statistics.
    Utterance,
}

/// Per-dimension mean and standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Statistics of the first `rows` rows of `m` (population variance, std floored at `NORM_EPS`).
    pub fn from_rows(m: &Matrix, rows: usize) -> Self {
        let rows = rows.min(m.rows).max(1);
        let mut mean = vec![0.0; m.cols];
        for r in 0..rows {
            mean.iter_mut().zip(m.row(r)).for_each(|(a, v)| *a += v);
        }
        mean.iter_mut().for_each(|a| *a /= rows as f64);
        let mut var = vec![0.0; m.cols];
        for r in 0..rows {
            for ((v, x), mu) in var.iter_mut().zip(m.row(r)).zip(&mean) {
                *v += (x - mu) * (x - mu);
            }
        }
        let std = var.iter().map(|v| (v / rows as f64).sqrt().max(NORM_EPS)).collect();
        NormStats { mean, std }
    }

    pub fn identity(dims: usize) -> Self {
        NormStats {
            mean: vec![0.0; dims],
            std: vec![1.0; dims],
        }
    }

    /// z-scores the first `rows` rows; remaining rows are set to zero.
    pub fn normalize(&self, m: &Matrix, rows: usize) -> Matrix {
        let mut out = Matrix::zeros(m.rows, m.cols);
        for r in 0..rows.min(m.rows) {
            for (c, o) in out.row_mut(r).iter_mut().enumerate() {
                *o = (m.get(r, c) - self.mean[c]) / self.std[c];
            }
        }
        out
    }

    pub fn denormalize(&self, m: &Matrix) -> Matrix {
        let mut out = m.clone();
        for r in 0..m.rows {
            for (c, o) in out.row_mut(r).iter_mut().enumerate() {
                *o = *o * self.std[c] + self.mean[c];
            }
        }
        out
    }
}

/// A fixed-length window of frames, normalized, with its statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    /// `len x dims`, z-scored; rows past `true_len` are zero.
    pub values: Matrix,
    pub true_len: usize,
    pub stats: NormStats,
}

/// Non-overlapping `len`-frame windows; the last is zero-padded. Returns `(window, true_len)`.
pub fn split_segments(features: &Matrix, len: usize) -> Vec<(Matrix, usize)> {
    let count = features.rows.div_ceil(len).max(1);
    (0..count)
        .map(|i| {
            let start = i * len;
            (features.rows_padded(start, len), features.rows.saturating_sub(start).min(len))
        })
        .collect()
}

/// Splits into `len`-frame windows, each z-scored with its own statistics.
pub fn segment(features: &Matrix, len: usize) -> Vec<Segment> {
    split_segments(features, len)
        .into_iter()
        .map(|(window, true_len)| {
            let stats = NormStats::from_rows(&window, true_len);
            Segment {
                values: stats.normalize(&window, true_len),
                true_len,
                stats,
            }
        })
        .collect()
}
