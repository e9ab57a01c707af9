//! Multi-head attention from decoder states (queries) onto the symbolic
//! sequence (keys and values), with additive sinusoidal position encodings.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::tensor::{glorot_uniform, BoundParams, ParamStore, Real, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MhaConfig {
    pub heads: usize,
    /// Total query/key projection width, split across heads.
    pub key_dim: usize,
    /// Total value projection width; this is also the output width.
    pub value_dim: usize,
    pub positional: bool,
}

impl Default for MhaConfig {
    fn default() -> Self {
        MhaConfig {
            heads: 4,
            key_dim: 256,
            value_dim: 512,
            positional: true,
        }
    }
}

impl MhaConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.heads >= 1, "attention needs at least one head");
        ensure!(
            self.key_dim > 0 && self.key_dim % self.heads == 0,
            "key width {} not divisible by {} heads",
            self.key_dim,
            self.heads
        );
        ensure!(
            self.value_dim > 0 && self.value_dim % self.heads == 0,
            "value width {} not divisible by {} heads",
            self.value_dim,
            self.heads
        );
        Ok(())
    }
}

/// `len x dim` table with `pe[t, 2i] = sin(t / 10000^(2i/dim))` and `pe[t, 2i+1]` the cosine.
pub fn positional_encoding<T: Real>(len: usize, dim: usize) -> Result<Tensor<T>> {
    ensure!(dim % 2 == 0, "positional encoding width must be even, got {}", dim);
    Ok(Tensor::from_fn(&[len, dim], |i| {
        let (t, c) = (i / dim, i % dim);
        let angle = t as f64 / 10000f64.powf((c - c % 2) as f64 / dim as f64);
        T::lit(if c % 2 == 0 { angle.sin() } else { angle.cos() })
    }))
}

/// Attention output and the weights that produced it.
pub struct Attended {
    pub output: Var,
    /// `[..., Tq, Tk]` softmax weights.
    pub weights: Var,
}

/// `softmax(Q K^T / sqrt(dk)) V` over batched `[N, Tq, dk]`, `[N, Tk, dk]`, `[N, Tk, dv]`.
pub fn scaled_dot_attention<T: Real>(tape: &mut Tape<T>, q: Var, k: Var, v: Var) -> Result<Attended> {
    let dk = *tape.shape(q).last().unwrap_or(&0);
    ensure!(dk > 0, "attention needs a positive key width");
    let scores = tape.matmul(q, k, true)?;
    let scores = tape.scale(scores, 1.0 / (dk as f64).sqrt());
    let weights = tape.softmax(scores)?;
    let output = tape.matmul(weights, v, false)?;
    Ok(Attended { output, weights })
}

/// Registers projection weights under `prefix`.
pub fn init_mha_params<T: Real, R: Rng + ?Sized>(
    store: &mut ParamStore<T>,
    prefix: &str,
    query_channels: usize,
    symbol_channels: usize,
    cfg: &MhaConfig,
    rng: &mut R,
) -> Result<()> {
    cfg.validate()?;
    let projections = [
        ("q", query_channels, cfg.key_dim),
        ("k", symbol_channels, cfg.key_dim),
        ("v", symbol_channels, cfg.value_dim),
    ];
    for (name, fan_in, fan_out) in projections {
        store.insert(format!("{prefix}.w{name}"), glorot_uniform(&[fan_in, fan_out], fan_in, fan_out, rng))?;
        store.insert(format!("{prefix}.b{name}"), Tensor::zeros(&[fan_out]))?;
    }
    Ok(())
}

/// `[B, C, T] -> [B, T, C]`, plus position encodings when enabled.
fn to_rows<T: Real>(tape: &mut Tape<T>, x: Var, positional: bool) -> Result<Var> {
    let rows = tape.permute(x, &[0, 2, 1])?;
    if !positional {
        return Ok(rows);
    }
    let (b, t, c) = {
        let s = tape.shape(rows);
        (s[0], s[1], s[2])
    };
    let pe = positional_encoding::<T>(t, c)?;
    let tiled = Tensor::from_fn(&[b, t, c], |i| pe.data()[i % (t * c)]);
    let pe = tape.constant(tiled);
    tape.add(rows, pe)
}

/// `[B, T, H*d] -> [B*H, T, d]`.
fn split_heads<T: Real>(tape: &mut Tape<T>, x: Var, heads: usize) -> Result<Var> {
    let (b, t, w) = {
        let s = tape.shape(x);
        (s[0], s[1], s[2])
    };
    let x = tape.reshape(x, &[b, t, heads, w / heads])?;
    let x = tape.permute(x, &[0, 2, 1, 3])?;
    tape.reshape(x, &[b * heads, t, w / heads])
}

/// Attends from `queries` `[B, Cq, Tq]` onto `symbols` `[B, Cs, Ts]`.
///
/// Heads are concatenated without an output projection, so the result is
/// `[B, value_dim, Tq]`, channels-first like the rest of the network.
pub fn mha<T: Real>(
    tape: &mut Tape<T>,
    params: &BoundParams,
    prefix: &str,
    queries: Var,
    symbols: Var,
    cfg: &MhaConfig,
) -> Result<Attended> {
    cfg.validate()?;
    let (qs, ss) = (tape.shape(queries).to_vec(), tape.shape(symbols).to_vec());
    ensure!(qs.len() == 3 && ss.len() == 3, "attention inputs must be [B, C, T], got {:?} and {:?}", qs, ss);
    ensure!(qs[0] == ss[0], "attention batch sizes differ: {} vs {}", qs[0], ss[0]);
    let (b, tq, h) = (qs[0], qs[2], cfg.heads);
    let p = |name: &str| params.get(&format!("{prefix}.{name}"));

    let q_rows = to_rows(tape, queries, cfg.positional)?;
    let s_rows = to_rows(tape, symbols, cfg.positional)?;
    let q = tape.affine(q_rows, p("wq")?, p("bq")?)?;
    let k = tape.affine(s_rows, p("wk")?, p("bk")?)?;
    let v = tape.affine(s_rows, p("wv")?, p("bv")?)?;
    let (q, k, v) = (split_heads(tape, q, h)?, split_heads(tape, k, h)?, split_heads(tape, v, h)?);

    let att = scaled_dot_attention(tape, q, k, v)?;
    let dv = cfg.value_dim / h;
    let out = tape.reshape(att.output, &[b, h, tq, dv])?;
    let out = tape.permute(out, &[0, 1, 3, 2])?;
    let output = tape.reshape(out, &[b, h * dv, tq])?;
    Ok(Attended {
        output,
        weights: att.weights,
    })
}
