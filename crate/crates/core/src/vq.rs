//! The symbolic book: nearest-prototype quantization, straight-through
//! gradients, EMA prototype updates and index-collapse diagnostics.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::par;
use crate::tensor::{Real, Tape, Tensor, Var};

/// Usage fraction below which a token counts as collapsed.
pub const COLLAPSE_FRACTION: f64 = 1e-4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BookInit {
    /// Rows drawn from uniform(-1/M, 1/M).
    #[default]
    Uniform,
    /// Farthest-point selection among the first batch of encoder outputs.
    FirstBatch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VqConfig {
    pub book_size: usize,
    pub dim: usize,
    pub decay: f64,
    /// Weight of the commitment term in the total loss.
    pub commitment: f64,
    pub init: BookInit,
}

impl Default for VqConfig {
    fn default() -> Self {
        VqConfig {
            book_size: 64,
            dim: 64,
            decay: 0.99,
            commitment: 0.2,
            init: BookInit::Uniform,
        }
    }
}

impl VqConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.book_size >= 1, "book size must be at least 1");
        ensure!(self.dim >= 1, "book dimension must be at least 1");
        ensure!(self.decay > 0.0 && self.decay < 1.0, "EMA decay must lie in (0, 1), got {}", self.decay);
        ensure!(self.commitment >= 0.0, "commitment weight must be non-negative");
        Ok(())
    }
}

/// `M x D` prototypes with their EMA accumulators and per-epoch usage counts.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolicBook<T> {
    config: VqConfig,
    prototypes: Vec<T>,
    counts: Vec<T>,
    sums: Vec<T>,
    usage: Vec<u64>,
    warm_started: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Quantization<T> {
    /// Nearest prototype per row.
    pub indices: Vec<usize>,
    /// The chosen prototype rows, same shape as the input.
    pub quantized: Tensor<T>,
    /// Squared distance summed over `D`, averaged over rows.
    pub commitment: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollapseReport {
    pub usage_fraction: Vec<f64>,
    pub collapsed: Vec<usize>,
    pub perplexity: f64,
}

impl CollapseReport {
    pub fn collapsed_fraction(&self) -> f64 {
        self.collapsed.len() as f64 / self.usage_fraction.len().max(1) as f64
    }
}

impl<T: Real> SymbolicBook<T> {
    pub fn new<R: Rng + ?Sized>(config: VqConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (m, d) = (config.book_size, config.dim);
        let bound = 1.0 / m as f64;
        let prototypes = (0..m * d).map(|_| T::lit(rng.gen_range(-bound..bound))).collect();
        Ok(SymbolicBook {
            prototypes,
            counts: vec![T::zero(); m],
            sums: vec![T::zero(); m * d],
            usage: vec![0; m],
            warm_started: config.init != BookInit::FirstBatch,
            config,
        })
    }

    /// Rebuilds a book from stored state (e.g. a checkpoint).
    pub fn from_parts(config: VqConfig, prototypes: Vec<T>, counts: Vec<T>, sums: Vec<T>, usage: Vec<u64>) -> Result<Self> {
        config.validate()?;
        let (m, d) = (config.book_size, config.dim);
        ensure!(prototypes.len() == m * d, "prototypes need {} values, got {}", m * d, prototypes.len());
        ensure!(counts.len() == m, "EMA counts need {} values, got {}", m, counts.len());
        ensure!(sums.len() == m * d, "EMA sums need {} values, got {}", m * d, sums.len());
        ensure!(usage.len() == m, "usage counters need {} values, got {}", m, usage.len());
        ensure!(prototypes.iter().all(|v| v.is_finite()), "prototypes must be finite");
        Ok(SymbolicBook {
            config,
            prototypes,
            counts,
            sums,
            usage,
            warm_started: true,
        })
    }

    pub fn config(&self) -> &VqConfig {
        &self.config
    }

    pub fn size(&self) -> usize {
        self.config.book_size
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn prototypes(&self) -> &[T] {
        &self.prototypes
    }

    pub fn prototype(&self, j: usize) -> &[T] {
        let d = self.dim();
        &self.prototypes[j * d..(j + 1) * d]
    }

    pub fn counts(&self) -> &[T] {
        &self.counts
    }

    pub fn sums(&self) -> &[T] {
        &self.sums
    }

    pub fn usage(&self) -> &[u64] {
        &self.usage
    }

    /// Index of the nearest prototype; ties go to the lowest index.
    pub fn nearest(&self, row: &[T]) -> usize {
        let mut best = (0, T::infinity());
        for j in 0..self.size() {
            let dist = row
                .iter()
                .zip(self.prototype(j))
                .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
            if dist < best.1 {
                best = (j, dist);
            }
        }
        best.0
    }

    /// Quantizes every `D`-sized row of `h` (any leading shape). Read-only on the book.
    pub fn quantize(&self, h: &Tensor<T>) -> Result<Quantization<T>> {
        let d = self.dim();
        ensure!(
            h.shape().last() == Some(&d),
            "book dimension is {} but input shape is {:?}",
            d,
            h.shape()
        );
        let rows = h.len() / d;
        let data = h.data();
        let indices = par::map_range(rows, |r| self.nearest(&data[r * d..(r + 1) * d]));
        let mut quantized = Vec::with_capacity(h.len());
        let mut commitment = 0.0;
        for (r, &k) in indices.iter().enumerate() {
            let e = self.prototype(k);
            quantized.extend_from_slice(e);
            commitment += data[r * d..(r + 1) * d]
                .iter()
                .zip(e)
                .map(|(&a, &b)| (a.as_f64() - b.as_f64()).powi(2))
                .sum::<f64>();
        }
        Ok(Quantization {
            indices,
            quantized: Tensor::new(h.shape(), quantized)?,
            commitment: commitment / rows.max(1) as f64,
        })
    }

    /// Whether a first-batch warm start is still pending.
    pub fn needs_warm_start(&self) -> bool {
        !self.warm_started
    }

    /// Seeds prototypes with rows of `h` by farthest-point selection: the
    /// first row, then repeatedly the row farthest from everything picked.
    ///
    /// If there are fewer distinct rows than tokens, the remaining prototypes
    /// keep their random values.
    pub fn warm_start(&mut self, h: &Tensor<T>) -> Result<()> {
        let (m, d) = (self.size(), self.dim());
        ensure!(h.shape().last() == Some(&d), "book dimension is {} but input shape is {:?}", d, h.shape());
        let rows = h.len() / d;
        ensure!(rows > 0, "warm start needs at least one row");
        let data = h.data();
        let row = |r: usize| &data[r * d..(r + 1) * d];
        let dist = |a: usize, b: usize| -> f64 {
            row(a).iter().zip(row(b)).map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2)).sum()
        };
        let mut picked = vec![0];
        let mut nearest: Vec<f64> = (0..rows).map(|r| dist(r, 0)).collect();
        while picked.len() < m {
            let (far, gap) = nearest
                .iter()
                .enumerate()
                .fold((0, 0.0), |best, (r, &g)| if g > best.1 { (r, g) } else { best });
            if gap == 0.0 {
                break;
            }
            picked.push(far);
            for (r, g) in nearest.iter_mut().enumerate() {
                *g = g.min(dist(r, far));
            }
        }
        for (j, &r) in picked.iter().enumerate() {
            self.prototypes[j * d..(j + 1) * d].copy_from_slice(row(r));
        }
        self.warm_started = true;
        Ok(())
    }

    /// EMA re-estimation from one batch of encoder outputs and their assignments.
    ///
    /// Tokens that have never been assigned (`N_j == 0`) stay frozen. Also adds
    /// the assignments to the usage counters.
    pub fn ema_update(&mut self, h: &Tensor<T>, indices: &[usize]) -> Result<()> {
        let (m, d) = (self.size(), self.dim());
        ensure!(h.shape().last() == Some(&d), "book dimension is {} but input shape is {:?}", d, h.shape());
        ensure!(
            indices.len() * d == h.len(),
            "{} indices for {} rows",
            indices.len(),
            h.len() / d
        );
        let mut n = vec![T::zero(); m];
        let mut s = vec![T::zero(); m * d];
        for (r, &k) in indices.iter().enumerate() {
            ensure!(k < m, "token index {} out of range for book of {}", k, m);
            n[k] += T::one();
            for (acc, &x) in s[k * d..(k + 1) * d].iter_mut().zip(&h.data()[r * d..(r + 1) * d]) {
                *acc += x;
            }
        }
        let g = T::lit(self.config.decay);
        let one_minus = T::one() - g;
        for j in 0..m {
            if n[j] == T::zero() && self.counts[j] == T::zero() {
                continue;
            }
            self.counts[j] = g * self.counts[j] + one_minus * n[j];
            for c in 0..d {
                let i = j * d + c;
                self.sums[i] = g * self.sums[i] + one_minus * s[i];
                self.prototypes[i] = self.sums[i] / self.counts[j];
            }
        }
        self.record_usage(indices);
        Ok(())
    }

    pub fn record_usage(&mut self, indices: &[usize]) {
        for &k in indices {
            if let Some(u) = self.usage.get_mut(k) {
                *u += 1;
            }
        }
    }

    pub fn reset_usage(&mut self) {
        self.usage.iter_mut().for_each(|u| *u = 0);
    }

    /// Per-token usage fractions, collapsed tokens and perplexity of the usage distribution.
    pub fn collapse_report(&self, frames_seen: u64) -> CollapseReport {
        collapse_report(&self.usage, frames_seen)
    }
}

/// Collapse diagnostics from raw usage counts.
pub fn collapse_report(usage: &[u64], frames_seen: u64) -> CollapseReport {
    let frames = frames_seen.max(1) as f64;
    let usage_fraction: Vec<f64> = usage.iter().map(|&u| u as f64 / frames).collect();
    let collapsed = (0..usage.len())
        .filter(|&j| usage_fraction[j] < COLLAPSE_FRACTION)
        .collect();
    let total: u64 = usage.iter().sum();
    let entropy: f64 = if total == 0 {
        0.0
    } else {
        usage
            .iter()
            .filter(|&&u| u > 0)
            .map(|&u| {
                let p = u as f64 / total as f64;
                -p * p.ln()
            })
            .sum()
    };
    CollapseReport {
        usage_fraction,
        collapsed,
        perplexity: entropy.exp(),
    }
}

/// `sum_D (h - sg(target))^2`, averaged over all leading positions.
pub fn commitment_loss<T: Real>(tape: &mut Tape<T>, h: Var, target: Var) -> Result<Var> {
    let shape = tape.shape(h).to_vec();
    ensure!(shape == tape.shape(target), "commitment operands differ in shape: {:?} vs {:?}", shape, tape.shape(target));
    let rows = shape[..shape.len().saturating_sub(1)].iter().product::<usize>().max(1);
    let target = tape.stop_gradient(target);
    let diff = tape.sub(h, target)?;
    let sq = tape.mul(diff, diff)?;
    let total = tape.sum(sq);
    Ok(tape.scale(total, 1.0 / rows as f64))
}

/// Quantized sequence on the tape.
pub struct TapeQuantization {
    /// Forward value equals the prototypes; backward passes gradients straight to `h`.
    pub quantized: Var,
    pub indices: Vec<usize>,
    pub commitment: Var,
}

/// Quantizes `h` with a straight-through gradient and builds its commitment loss.
pub fn quantize_on_tape<T: Real>(tape: &mut Tape<T>, h: Var, book: &SymbolicBook<T>) -> Result<TapeQuantization> {
    let q = book.quantize(tape.value(h))?;
    let target = tape.constant(q.quantized.clone());
    let commitment = commitment_loss(tape, h, target)?;
    let quantized = tape.straight_through(h, q.quantized)?;
    Ok(TapeQuantization {
        quantized,
        indices: q.indices,
        commitment,
    })
}
