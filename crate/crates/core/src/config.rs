//! Sectioned `key = value` run configuration.
//!
//! ```text
//! [vq]
//! book_size = 64   # trailing comments are allowed
//! [mix]
//! snr_levels = 20, 15, 10
//! ```
//!
//! Unknown keys and malformed values are rejected with the offending key and
//! line. `model.preset` is applied before every other key, wherever it appears.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::dsp::NormScope;
use crate::error::{Error, Result};
use crate::eval::StoiConfig;
use crate::model::{ModelConfig, Variant};
use crate::pipeline::TrainConfig;
use crate::vq::BookInit;

/// Fully resolved configuration of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub stoi: StoiConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            stoi: StoiConfig::default(),
        }
    }
}

type ValueResult<T> = std::result::Result<T, String>;

fn num<T: FromStr>(v: &str, what: &str) -> ValueResult<T> {
    v.parse().map_err(|_| format!("expected {what}, got `{v}`"))
}

fn count(v: &str) -> ValueResult<usize> {
    num(v, "a non-negative integer")
}

fn positive(v: &str) -> ValueResult<usize> {
    match count(v)? {
        0 => Err("must be at least 1".into()),
        n => Ok(n),
    }
}

fn real(v: &str) -> ValueResult<f64> {
    let x: f64 = num(v, "a number")?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("expected a finite number, got `{v}`"))
    }
}

/// A number in the open interval (0, 1).
fn fraction(v: &str) -> ValueResult<f64> {
    match real(v)? {
        x if x > 0.0 && x < 1.0 => Ok(x),
        x => Err(format!("must lie in (0, 1), got {x}")),
    }
}

fn non_negative(v: &str) -> ValueResult<f64> {
    match real(v)? {
        x if x >= 0.0 => Ok(x),
        x => Err(format!("must not be negative, got {x}")),
    }
}

fn flag(v: &str) -> ValueResult<bool> {
    num(v, "true or false")
}

fn list<T>(v: &str, item: impl Fn(&str) -> ValueResult<T>) -> ValueResult<Vec<T>> {
    let inner = v.trim().trim_start_matches('[').trim_end_matches(']').trim();
    if inner.is_empty() {
        return Err("expected a nonempty comma-separated list".into());
    }
    inner.split(',').map(|s| item(s.trim())).collect()
}

fn show_list<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

fn unquote(v: &str) -> &str {
    let v = v.trim();
    v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v)
}

impl RunConfig {
    /// Applies one `section.key = value`; the error is a bare message.
    fn set(&mut self, key: &str, value: &str) -> ValueResult<()> {
        let v = unquote(value);
        let (m, t, s) = (&mut self.model, &mut self.train, &mut self.stoi);
        match key {
            "model.preset" => {
                let variant = m.variant;
                *m = match v {
                    "full" => ModelConfig {
                        variant,
                        ..ModelConfig::default()
                    },
                    "reduced" => ModelConfig::reduced(variant),
                    "miniature" => ModelConfig::miniature(variant),
                    _ => return Err(format!("expected full, reduced or miniature, got `{v}`")),
                };
                t.features.segment_len = m.segment_len;
            }
            "model.variant" => {
                m.variant = Variant::parse(v).ok_or_else(|| format!("expected unet, unet-mol, proposed or oracle, got `{v}`"))?
            }
            "model.enc_widths" => m.enc_widths = list(v, positive)?,
            "model.enc_channels" => m.enc_channels = list(v, positive)?,
            "model.dec_widths" => m.dec_widths = list(v, positive)?,
            "model.leaky_slope" => m.leaky_slope = real(v)?,
            "model.sym_hidden" => m.sym_hidden = positive(v)?,
            "model.sym_layers" => m.sym_layers = positive(v)?,
            "model.dropout" => m.dropout = real(v)?,
            "model.context_width" => m.context_width = positive(v)?,
            "model.context_channels" => m.context_channels = positive(v)?,
            "model.mol_weight" => m.mol_weight = real(v)?,
            "model.n_phonemes" => m.n_phonemes = positive(v)?,
            "data.segment_len" => {
                m.segment_len = positive(v)?;
                t.features.segment_len = m.segment_len;
            }
            "vq.book_size" => m.vq.book_size = positive(v)?,
            "vq.dim" => m.vq.dim = positive(v)?,
            "vq.decay" => m.vq.decay = fraction(v)?,
            "vq.commitment" => m.vq.commitment = non_negative(v)?,
            "vq.init" => {
                m.vq.init = match v {
                    "uniform" => BookInit::Uniform,
                    "first-batch" => BookInit::FirstBatch,
                    _ => return Err(format!("expected uniform or first-batch, got `{v}`")),
                }
            }
            "mha.heads" => m.mha.heads = positive(v)?,
            "mha.key_dim" => m.mha.key_dim = positive(v)?,
            "mha.value_dim" => m.mha.value_dim = positive(v)?,
            "mha.positional" => m.mha.positional = flag(v)?,
            "train.batch_size" => t.batch_size = positive(v)?,
            "train.lr" => t.adam.lr = non_negative(v)?,
            "train.beta1" => t.adam.beta1 = real(v)?,
            "train.beta2" => t.adam.beta2 = real(v)?,
            "train.epsilon" => t.adam.epsilon = real(v)?,
            "train.max_epochs" => t.max_epochs = positive(v)?,
            "train.patience" => t.patience = positive(v)?,
            "train.max_steps" => t.max_steps = if v == "none" { None } else { Some(positive(v)?) },
            "train.seed" => t.seed = num(v, "a non-negative integer")?,
            "mix.snr_levels" => t.train_mix.snr_levels = list(v, real)?,
            "mix.exhaustive" => t.train_mix.exhaustive = flag(v)?,
            "mix.valid_snr_levels" => t.valid_mix.snr_levels = list(v, real)?,
            "mix.valid_exhaustive" => t.valid_mix.exhaustive = flag(v)?,
            "norm.scope" => {
                t.features.norm_scope = match v {
                    "segment" => NormScope::Segment,
                    "utterance" => NormScope::Utterance,
                    _ => return Err(format!("expected segment or utterance, got `{v}`")),
                }
            }
            "norm.mfcc" => t.features.norm_mfcc = flag(v)?,
            "stoi.rate" => s.rate = num(v, "a sample rate in Hz")?,
            "stoi.frame" => s.frame = positive(v)?,
            "stoi.nfft" => s.nfft = positive(v)?,
            "stoi.bands" => s.bands = positive(v)?,
            "stoi.min_freq" => s.min_freq = real(v)?,
            "stoi.segment" => s.segment = positive(v)?,
            "stoi.beta" => s.beta = real(v)?,
            "stoi.dyn_range" => s.dyn_range = real(v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Every key with its resolved value, grouped by section.
    pub fn entries(&self) -> Vec<(&'static str, &'static str, String)> {
        let (m, t, s) = (&self.model, &self.train, &self.stoi);
        let init = match m.vq.init {
            BookInit::Uniform => "uniform",
            BookInit::FirstBatch => "first-batch",
        };
        let scope = match t.features.norm_scope {
            NormScope::Segment => "segment",
            NormScope::Utterance => "utterance",
        };
        vec![
            ("data", "segment_len", m.segment_len.to_string()),
            ("model", "variant", m.variant.name().to_string()),
            ("model", "enc_widths", show_list(&m.enc_widths)),
            ("model", "enc_channels", show_list(&m.enc_channels)),
            ("model", "dec_widths", show_list(&m.dec_widths)),
            ("model", "leaky_slope", m.leaky_slope.to_string()),
            ("model", "sym_hidden", m.sym_hidden.to_string()),
            ("model", "sym_layers", m.sym_layers.to_string()),
            ("model", "dropout", m.dropout.to_string()),
            ("model", "context_width", m.context_width.to_string()),
            ("model", "context_channels", m.context_channels.to_string()),
            ("model", "mol_weight", m.mol_weight.to_string()),
            ("model", "n_phonemes", m.n_phonemes.to_string()),
            ("vq", "book_size", m.vq.book_size.to_string()),
            ("vq", "dim", m.vq.dim.to_string()),
            ("vq", "decay", m.vq.decay.to_string()),
            ("vq", "commitment", m.vq.commitment.to_string()),
            ("vq", "init", init.to_string()),
            ("mha", "heads", m.mha.heads.to_string()),
            ("mha", "key_dim", m.mha.key_dim.to_string()),
            ("mha", "value_dim", m.mha.value_dim.to_string()),
            ("mha", "positional", m.mha.positional.to_string()),
            ("train", "batch_size", t.batch_size.to_string()),
            ("train", "lr", t.adam.lr.to_string()),
            ("train", "beta1", t.adam.beta1.to_string()),
            ("train", "beta2", t.adam.beta2.to_string()),
            ("train", "epsilon", t.adam.epsilon.to_string()),
            ("train", "max_epochs", t.max_epochs.to_string()),
            ("train", "patience", t.patience.to_string()),
            ("train", "max_steps", t.max_steps.map_or("none".to_string(), |n| n.to_string())),
            ("train", "seed", t.seed.to_string()),
            ("mix", "snr_levels", show_list(&t.train_mix.snr_levels)),
            ("mix", "exhaustive", t.train_mix.exhaustive.to_string()),
            ("mix", "valid_snr_levels", show_list(&t.valid_mix.snr_levels)),
            ("mix", "valid_exhaustive", t.valid_mix.exhaustive.to_string()),
            ("norm", "scope", scope.to_string()),
            ("norm", "mfcc", t.features.norm_mfcc.to_string()),
            ("stoi", "rate", s.rate.to_string()),
            ("stoi", "frame", s.frame.to_string()),
            ("stoi", "nfft", s.nfft.to_string()),
            ("stoi", "bands", s.bands.to_string()),
            ("stoi", "min_freq", s.min_freq.to_string()),
            ("stoi", "segment", s.segment.to_string()),
            ("stoi", "beta", s.beta.to_string()),
            ("stoi", "dyn_range", s.dyn_range.to_string()),
        ]
    }

    /// The resolved configuration in the input syntax; parsing it gives `self` back.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for (sec, key, value) in self.entries() {
            if sec != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{sec}]");
                section = sec;
            }
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    /// Parses config text and `key=value` overrides (overrides win).
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut pending: Vec<(String, String, String)> = Vec::new();
        let mut section = String::new();
        for (no, raw) in text.lines().enumerate() {
            let origin = format!("line {}", no + 1);
            // A `#` or `;` after whitespace starts a trailing comment.
            let line = [" #", "\t#", " ;", "\t;"]
                .iter()
                .filter_map(|m| raw.find(m))
                .min()
                .map_or(raw, |i| &raw[..i])
                .trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config {
                    key: line.to_string(),
                    origin,
                    msg: "expected `key = value` or `[section]`".into(),
                });
            };
            let key = key.trim();
            let full = if section.is_empty() || key.contains('.') {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            pending.push((full, value.trim().to_string(), origin));
        }
        for o in overrides {
            let Some((key, value)) = o.split_once('=') else {
                return Err(Error::Config {
                    key: o.clone(),
                    origin: "--set".into(),
                    msg: "expected `section.key=value`".into(),
                });
            };
            pending.push((key.trim().to_string(), value.trim().to_string(), "--set".into()));
        }
        // Presets replace the whole model section, so they go first.
        pending.sort_by_key(|(k, _, _)| k != "model.preset");
        let mut cfg = RunConfig::default();
        for (key, value, origin) in pending {
            cfg.set(&key, &value).map_err(|msg| Error::Config { key, origin, msg })?;
        }
        cfg.model.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::parse(&text, overrides)
    }
}
