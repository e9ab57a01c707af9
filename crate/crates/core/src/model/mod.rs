//! Symbolic encoder, U-Net encoder/decoder with attention-and-skip
//! concatenation, the baseline variants, and the training losses.
//!
//! Feature maps are channels-first `[B, C, T]`; frequency bins are channels.

mod config;

pub use config::{ModelConfig, Variant};

use rand::Rng;

use crate::attention::{init_mha_params, mha};
use crate::error::{ensure, Error, Result};
use crate::tensor::{glorot_uniform, Activation, BoundParams, ParamStore, Real, Tape, Tensor, Var};
use crate::vq::{commitment_loss, quantize_on_tape, SymbolicBook};

fn add_conv<T: Real, R: Rng + ?Sized>(s: &mut ParamStore<T>, name: &str, cin: usize, cout: usize, w: usize, rng: &mut R) -> Result<()> {
    s.insert(format!("{name}.k"), glorot_uniform(&[cout, cin, w], cin * w, cout * w, rng))?;
    s.insert(format!("{name}.b"), Tensor::zeros(&[cout]))
}

fn add_deconv<T: Real, R: Rng + ?Sized>(s: &mut ParamStore<T>, name: &str, cin: usize, cout: usize, w: usize, rng: &mut R) -> Result<()> {
    s.insert(format!("{name}.k"), glorot_uniform(&[cin, cout, w], cin * w, cout * w, rng))?;
    s.insert(format!("{name}.b"), Tensor::zeros(&[cout]))
}

fn add_linear<T: Real, R: Rng + ?Sized>(s: &mut ParamStore<T>, name: &str, din: usize, dout: usize, rng: &mut R) -> Result<()> {
    s.insert(format!("{name}.w"), glorot_uniform(&[din, dout], din, dout, rng))?;
    s.insert(format!("{name}.b"), Tensor::zeros(&[dout]))
}

/// Input channels of decoder layer `i`.
fn dec_input_channels(cfg: &ModelConfig, i: usize) -> usize {
    let l = cfg.layers();
    let skip = cfg.enc_channels[l - 1 - i];
    if cfg.variant.has_symbolic() {
        skip + cfg.mha.value_dim
    } else if i == 0 {
        skip
    } else {
        skip + cfg.dec_channels(i - 1)
    }
}

/// Channels of the decoder state `d^(i)` that queries layer `i`.
fn query_channels(cfg: &ModelConfig, i: usize) -> usize {
    if i == 0 {
        cfg.enc_channels[cfg.layers() - 1]
    } else {
        cfg.dec_channels(i - 1)
    }
}

/// Creates every learnable tensor for `cfg`, named as the forward pass expects.
pub fn init_params<T: Real, R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<ParamStore<T>> {
    cfg.validate()?;
    let mut s = ParamStore::new();
    let l = cfg.layers();
    let mut cin = cfg.input_channels();
    for i in 0..l {
        add_conv(&mut s, &format!("enc.{i}"), cin, cfg.enc_channels[i], cfg.enc_widths[i], rng)?;
        cin = cfg.enc_channels[i];
    }
    for i in 0..l {
        if cfg.variant.has_symbolic() {
            init_mha_params(&mut s, &format!("dec.{i}.att"), query_channels(cfg, i), cfg.context_channels, &cfg.mha, rng)?;
        }
        add_deconv(&mut s, &format!("dec.{i}"), dec_input_channels(cfg, i), cfg.dec_channels(i), cfg.dec_widths[i], rng)?;
    }
    let last = cfg.dec_channels(l - 1);
    add_conv(&mut s, "out", last, cfg.n_bins, 1, rng)?;
    match cfg.variant {
        Variant::Unet => {}
        Variant::UnetMol => add_conv(&mut s, "mol", last, cfg.mfcc_dim, 1, rng)?,
        Variant::Proposed | Variant::Oracle => {
            let d = cfg.vq.dim;
            if cfg.variant == Variant::Proposed {
                let mut din = cfg.mfcc_dim;
                for j in 0..cfg.sym_layers {
                    add_linear(&mut s, &format!("sym.fc.{j}"), din, cfg.sym_hidden, rng)?;
                    din = cfg.sym_hidden;
                }
                add_linear(&mut s, "sym.proj", din, d, rng)?;
            } else {
                s.insert("sym.embed", glorot_uniform(&[cfg.n_phonemes, d], cfg.n_phonemes, d, rng))?;
            }
            add_conv(&mut s, "sym.ctx", d, cfg.context_channels, cfg.context_width, rng)?;
        }
    }
    Ok(s)
}

/// One batch of model inputs, channels-first.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInput<T> {
    /// `[B, n_bins, T]` normalized noisy LPS.
    pub noisy: Tensor<T>,
    /// `[B, mfcc_dim, T]` MFCCs of the noisy signal.
    pub mfcc: Option<Tensor<T>>,
    /// `B * T` phoneme class ids (oracle variant).
    pub labels: Option<Vec<usize>>,
}

/// How the symbolic encoder output is discretized.
#[derive(Clone, Copy, Debug)]
pub enum Quantizer<'a, T> {
    /// Nearest prototype with a straight-through gradient.
    Book(&'a SymbolicBook<T>),
    /// `h + offsets` with fixed offsets and commitment targets.
    ///
    /// Evaluated at the point where `offsets = prototypes - h`, this has the
    /// same value as [`Quantizer::Book`] and its exact derivative is the
    /// straight-through gradient, so finite differences can check it.
    Frozen { prototypes: &'a Tensor<T>, offsets: &'a Tensor<T> },
}

/// Output of the symbolic encoder.
pub struct Symbolic {
    /// `[B, context_channels, T]` contextualized symbolic sequence.
    pub sequence: Var,
    /// `[B, T, D]` encoder output before quantization (proposed variant).
    pub pre_quant: Option<Var>,
    /// `[B, T, D]` quantized sequence before the context conv.
    pub quantized: Option<Var>,
    pub commitment: Option<Var>,
    /// Token per frame, batch-major.
    pub indices: Vec<usize>,
}

pub struct Forward {
    /// `[B, n_bins, T]`.
    pub enhanced: Var,
    pub symbolic: Option<Symbolic>,
    /// `[B, mfcc_dim, T]` auxiliary prediction (unet-mol).
    pub mfcc_pred: Option<Var>,
}

impl Forward {
    pub fn commitment(&self) -> Option<Var> {
        self.symbolic.as_ref().and_then(|s| s.commitment)
    }
}

fn conv<T: Real>(tape: &mut Tape<T>, p: &BoundParams, name: &str, x: Var, stride: usize) -> Result<Var> {
    tape.conv1d(x, p.get(&format!("{name}.k"))?, p.get(&format!("{name}.b"))?, stride)
}

fn linear<T: Real>(tape: &mut Tape<T>, p: &BoundParams, name: &str, x: Var) -> Result<Var> {
    tape.affine(x, p.get(&format!("{name}.w"))?, p.get(&format!("{name}.b"))?)
}

/// MFCCs (or phoneme labels) to the contextualized symbolic sequence.
///
/// Proposed: per-frame FC stack with ReLU and dropout, projection to `D`,
/// quantization, then the context conv. Oracle: embedding lookup, then the
/// context conv, with no quantization and no commitment loss.
pub fn symbolic_encoder_forward<T: Real, R: Rng + ?Sized>(
    tape: &mut Tape<T>,
    p: &BoundParams,
    cfg: &ModelConfig,
    input: &ModelInput<T>,
    quantizer: Option<Quantizer<'_, T>>,
    training: bool,
    rng: &mut R,
) -> Result<Symbolic> {
    let (b, t) = (input.noisy.shape()[0], input.noisy.shape()[2]);
    let (rows, pre_quant, quantized, commitment, indices) = match cfg.variant {
        Variant::Proposed => {
            let mfcc = input
                .mfcc
                .as_ref()
                .ok_or_else(|| Error::Contract("proposed variant needs MFCC input".into()))?;
            ensure!(
                mfcc.shape() == [b, cfg.mfcc_dim, t],
                "MFCC input {:?} does not match [{}, {}, {}]",
                mfcc.shape(),
                b,
                cfg.mfcc_dim,
                t
            );
            let x = tape.constant(mfcc.clone());
            let mut h = tape.permute(x, &[0, 2, 1])?;
            for j in 0..cfg.sym_layers {
                h = linear(tape, p, &format!("sym.fc.{j}"), h)?;
                h = tape.activation(h, Activation::Relu)?;
                h = tape.dropout(h, cfg.dropout, training, rng)?;
            }
            let h = linear(tape, p, "sym.proj", h)?;
            let (q, commit, idx) = match quantizer {
                Some(Quantizer::Book(book)) => {
                    ensure!(book.dim() == cfg.vq.dim, "book dimension {} does not match model D={}", book.dim(), cfg.vq.dim);
                    let q = quantize_on_tape(tape, h, book)?;
                    (q.quantized, q.commitment, q.indices)
                }
                Some(Quantizer::Frozen { prototypes, offsets }) => {
                    ensure!(
                        prototypes.shape() == tape.shape(h) && offsets.shape() == tape.shape(h),
                        "frozen quantizer shapes do not match encoder output {:?}",
                        tape.shape(h)
                    );
                    let c = tape.constant(offsets.clone());
                    let q = tape.add(h, c)?;
                    let target = tape.constant(prototypes.clone());
                    (q, commitment_loss(tape, h, target)?, Vec::new())
                }
                None => return Err(Error::Contract("proposed variant needs a symbolic book".into())),
            };
            (q, Some(h), Some(q), Some(commit), idx)
        }
        Variant::Oracle => {
            let labels = input
                .labels
                .as_ref()
                .ok_or_else(|| Error::Contract("oracle variant needs phoneme labels".into()))?;
            ensure!(labels.len() == b * t, "expected {} phoneme labels, got {}", b * t, labels.len());
            let e = tape.embedding(p.get("sym.embed")?, labels, &[b, t])?;
            (e, None, None, None, Vec::new())
        }
        v => return Err(Error::Contract(format!("variant {} has no symbolic encoder", v.name()))),
    };
    let x = tape.permute(rows, &[0, 2, 1])?;
    let sequence = conv(tape, p, "sym.ctx", x, 1)?;
    Ok(Symbolic {
        sequence,
        pre_quant,
        quantized,
        commitment,
        indices,
    })
}

/// Stride-2 conv stack. Returns the bottleneck and the skips `s^1..s^L`.
pub fn unet_encode<T: Real>(tape: &mut Tape<T>, p: &BoundParams, cfg: &ModelConfig, x: Var) -> Result<(Var, Vec<Var>)> {
    let shape = tape.shape(x).to_vec();
    ensure!(
        shape.len() == 3 && shape[1] == cfg.input_channels(),
        "encoder input {:?} needs {} channels",
        shape,
        cfg.input_channels()
    );
    ensure!(
        shape[2] % (1 << cfg.layers()) == 0,
        "segment length {} not divisible by 2^{}",
        shape[2],
        cfg.layers()
    );
    let mut skips = Vec::with_capacity(cfg.layers());
    let mut h = x;
    for i in 0..cfg.layers() {
        h = conv(tape, p, &format!("enc.{i}"), h, 2)?;
        h = tape.activation(h, Activation::LeakyRelu(cfg.leaky_slope))?;
        skips.push(h);
    }
    Ok((h, skips))
}

/// Decoder layer `i` (0-based): attention context or previous state,
/// concatenated with the skip, then a stride-2 deconv and LeakyReLU.
pub fn decode_layer<T: Real>(
    tape: &mut Tape<T>,
    p: &BoundParams,
    cfg: &ModelConfig,
    i: usize,
    prev: Var,
    skip: Var,
    symbolic: Option<Var>,
) -> Result<Var> {
    let (ps, ss) = (tape.shape(prev).to_vec(), tape.shape(skip).to_vec());
    ensure!(ps[2] == ss[2], "decoder layer {}: skip length {} differs from state length {}", i, ss[2], ps[2]);
    let joined = if cfg.variant.has_symbolic() {
        let sym = symbolic.ok_or_else(|| Error::Contract(format!("variant {} needs a symbolic sequence", cfg.variant.name())))?;
        let ctx = mha(tape, p, &format!("dec.{i}.att"), prev, sym, &cfg.mha)?;
        tape.concat(&[skip, ctx.output], 1)?
    } else if i == 0 {
        // The bottleneck is the deepest skip itself.
        skip
    } else {
        tape.concat(&[skip, prev], 1)?
    };
    let name = format!("dec.{i}");
    let y = tape.deconv1d(joined, p.get(&format!("{name}.k"))?, p.get(&format!("{name}.b"))?, 2)?;
    tape.activation(y, Activation::LeakyRelu(cfg.leaky_slope))
}

/// Full forward pass: `[B, n_bins, T]` in, `[B, n_bins, T]` out.
pub fn model_forward<T: Real, R: Rng + ?Sized>(
    tape: &mut Tape<T>,
    p: &BoundParams,
    cfg: &ModelConfig,
    input: &ModelInput<T>,
    quantizer: Option<Quantizer<'_, T>>,
    training: bool,
    rng: &mut R,
) -> Result<Forward> {
    let shape = input.noisy.shape();
    ensure!(
        shape.len() == 3 && shape[1] == cfg.n_bins,
        "noisy input {:?} must be [B, {}, T]",
        shape,
        cfg.n_bins
    );
    let symbolic = if cfg.variant.has_symbolic() {
        Some(symbolic_encoder_forward(tape, p, cfg, input, quantizer, training, rng)?)
    } else {
        None
    };
    let noisy = tape.constant(input.noisy.clone());
    let x = if cfg.variant == Variant::UnetMol {
        let mfcc = input
            .mfcc
            .as_ref()
            .ok_or_else(|| Error::Contract("unet-mol variant needs MFCC input".into()))?;
        ensure!(
            mfcc.shape() == [shape[0], cfg.mfcc_dim, shape[2]],
            "MFCC input {:?} does not match the LPS input {:?}",
            mfcc.shape(),
            shape
        );
        let m = tape.constant(mfcc.clone());
        tape.concat(&[noisy, m], 1)?
    } else {
        noisy
    };
    let (bottleneck, skips) = unet_encode(tape, p, cfg, x)?;
    let mut d = bottleneck;
    let l = cfg.layers();
    for i in 0..l {
        d = decode_layer(tape, p, cfg, i, d, skips[l - 1 - i], symbolic.as_ref().map(|s| s.sequence))?;
    }
    let enhanced = conv(tape, p, "out", d, 1)?;
    let mfcc_pred = if cfg.variant == Variant::UnetMol {
        Some(conv(tape, p, "mol", d, 1)?)
    } else {
        None
    };
    Ok(Forward {
        enhanced,
        symbolic,
        mfcc_pred,
    })
}

/// Offsets and prototypes that freeze the quantizer at the current point; see [`Quantizer::Frozen`].
pub fn freeze_quantization<T: Real>(tape: &Tape<T>, fwd: &Forward) -> Option<(Tensor<T>, Tensor<T>)> {
    let s = fwd.symbolic.as_ref()?;
    let (h, q) = (tape.value(s.pre_quant?), tape.value(s.quantized?));
    let offsets = Tensor::new(h.shape(), q.data().iter().zip(h.data()).map(|(&e, &x)| e - x).collect()).ok()?;
    Some((q.clone(), offsets))
}

/// Loss terms of one batch.
pub struct Loss {
    pub total: Var,
    pub mse: Var,
    pub commitment: Option<Var>,
    pub aux: Option<Var>,
}

/// `mse(enhanced, clean) + lambda * commitment [+ mol_weight * mse(mfcc_pred, clean_mfcc)]`.
pub fn total_loss<T: Real>(
    tape: &mut Tape<T>,
    fwd: &Forward,
    cfg: &ModelConfig,
    clean: &Tensor<T>,
    clean_mfcc: Option<&Tensor<T>>,
) -> Result<Loss> {
    let target = tape.constant(clean.clone());
    let mse = tape.mse(fwd.enhanced, target)?;
    let mut total = mse;
    let commitment = fwd.commitment();
    if let Some(c) = commitment {
        let weighted = tape.scale(c, cfg.vq.commitment);
        total = tape.add(total, weighted)?;
    }
    let aux = match fwd.mfcc_pred {
        Some(pred) => {
            let t = clean_mfcc.ok_or_else(|| Error::Contract("unet-mol loss needs clean MFCC targets".into()))?;
            let t = tape.constant(t.clone());
            let aux = tape.mse(pred, t)?;
            let weighted = tape.scale(aux, cfg.mol_weight);
            total = tape.add(total, weighted)?;
            Some(aux)
        }
        None => None,
    };
    Ok(Loss {
        total,
        mse,
        commitment,
        aux,
    })
}
