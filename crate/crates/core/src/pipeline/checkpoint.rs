//! `SYMSE001` container: magic, u64 LE header length, JSON header, f32 LE payload.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::FeatureOptions;
use crate::error::{ensure, Error, Result};
use crate::model::{init_params, ModelConfig};
use crate::tensor::{Adam, AdamConfig, ParamStore, Tensor};
use crate::vq::SymbolicBook;

pub const MAGIC: &[u8; 8] = b"SYMSE001";
pub const FORMAT_VERSION: u32 = 1;

/// Everything needed to resume training or run inference.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    /// Feature extraction the model was trained with.
    pub features: FeatureOptions,
    pub params: ParamStore<f32>,
    pub book: Option<SymbolicBook<f32>>,
    pub adam: Option<Adam<f32>>,
    pub epoch: usize,
    pub best_valid_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ArrayInfo {
    dtype: String,
    shape: Vec<usize>,
    /// Byte offset into the payload.
    offset: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    model: ModelConfig,
    features: FeatureOptions,
    epoch: usize,
    best_valid_loss: Option<f64>,
    adam: Option<AdamHeader>,
    /// Per-token selection counts; integers, so they live in the header.
    book_usage: Option<Vec<u64>>,
    arrays: BTreeMap<String, ArrayInfo>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct AdamHeader {
    config: AdamConfig,
    step: u64,
}

const PARAM: &str = "param.";
const ADAM_M: &str = "adam.m.";
const ADAM_V: &str = "adam.v.";

impl Checkpoint {
    fn arrays(&self) -> BTreeMap<String, (Vec<usize>, &[f32])> {
        let mut out = BTreeMap::new();
        for (name, t) in self.params.iter() {
            out.insert(format!("{PARAM}{name}"), (t.shape().to_vec(), t.data()));
        }
        if let Some(b) = &self.book {
            let (m, d) = (b.size(), b.dim());
            out.insert("vq.e".to_string(), (vec![m, d], b.prototypes()));
            out.insert("vq.N".to_string(), (vec![m], b.counts()));
            out.insert("vq.m".to_string(), (vec![m, d], b.sums()));
        }
        if let Some(a) = &self.adam {
            for (name, m) in a.first_moments() {
                out.insert(format!("{ADAM_M}{name}"), (vec![m.len()], m.as_slice()));
            }
            for (name, v) in a.second_moments() {
                out.insert(format!("{ADAM_V}{name}"), (vec![v.len()], v.as_slice()));
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let arrays = self.arrays();
        let mut infos = BTreeMap::new();
        let mut offset = 0u64;
        for (name, (shape, data)) in &arrays {
            infos.insert(
                name.clone(),
                ArrayInfo {
                    dtype: "f32".into(),
                    shape: shape.clone(),
                    offset,
                },
            );
            offset += 4 * data.len() as u64;
        }
        let header = Header {
            version: FORMAT_VERSION,
            model: self.model.clone(),
            features: self.features.clone(),
            epoch: self.epoch,
            best_valid_loss: self.best_valid_loss,
            adam: self.adam.as_ref().map(|a| AdamHeader {
                config: a.config,
                step: a.steps(),
            }),
            book_usage: self.book.as_ref().map(|b| b.usage().to_vec()),
            arrays: infos,
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Internal(format!("checkpoint header: {e}")))?;
        let mut out = Vec::with_capacity(16 + json.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, data) in arrays.values() {
            for v in data.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::Format("not a checkpoint: bad magic (expected SYMSE001)".into()));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = &bytes[16..];
        if body.len() < header_len {
            return Err(Error::Format(format!(
                "truncated checkpoint: header needs {} bytes, {} present",
                header_len,
                body.len()
            )));
        }
        let header: Header = serde_json::from_slice(&body[..header_len])
            .map_err(|e| Error::Format(format!("checkpoint header is not valid JSON: {e}")))?;
        if header.version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "checkpoint version {} is not supported (expected {})",
                header.version, FORMAT_VERSION
            )));
        }
        header.model.validate()?;
        let payload = &body[header_len..];

        let mut by_offset: Vec<(&String, &ArrayInfo)> = header.arrays.iter().collect();
        by_offset.sort_by_key(|(_, info)| info.offset);
        let mut arrays: BTreeMap<&str, Tensor<f32>> = BTreeMap::new();
        for (name, info) in by_offset {
            if info.dtype != "f32" {
                return Err(Error::Format(format!("array `{}` has unsupported dtype {}", name, info.dtype)));
            }
            let n: usize = info.shape.iter().product();
            let start = info.offset as usize;
            let end = start + 4 * n;
            if end > payload.len() {
                return Err(Error::Format(format!(
                    "truncated checkpoint: array `{}` needs bytes {}..{} of the payload but only {} are present",
                    name,
                    start,
                    end,
                    payload.len()
                )));
            }
            let data = payload[start..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            arrays.insert(name, Tensor::new(&info.shape, data)?);
        }

        let mut params = ParamStore::new();
        let mut m = BTreeMap::new();
        let mut v = BTreeMap::new();
        for (name, t) in &arrays {
            if let Some(p) = name.strip_prefix(PARAM) {
                params.insert(p, t.clone())?;
            } else if let Some(p) = name.strip_prefix(ADAM_M) {
                m.insert(p.to_string(), t.data().to_vec());
            } else if let Some(p) = name.strip_prefix(ADAM_V) {
                v.insert(p.to_string(), t.data().to_vec());
            }
        }
        let book = match header.book_usage {
            Some(usage) => {
                let take = |k: &str| -> Result<Vec<f32>> {
                    arrays
                        .get(k)
                        .map(|t| t.data().to_vec())
                        .ok_or_else(|| Error::Format(format!("checkpoint has book usage but no `{k}` array")))
                };
                Some(
                    SymbolicBook::from_parts(header.model.vq.clone(), take("vq.e")?, take("vq.N")?, take("vq.m")?, usage)
                        .map_err(|e| Error::Format(format!("book state does not match the header's book config: {e}")))?,
                )
            }
            None => None,
        };
        let adam = header.adam.map(|a| Adam::from_parts(a.config, a.step, m, v));
        Ok(Checkpoint {
            model: header.model,
            features: header.features,
            params,
            book,
            adam,
            epoch: header.epoch,
            best_valid_loss: header.best_valid_loss,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Checks that every parameter has the shape `cfg` expects.
    pub fn check_against(&self, cfg: &ModelConfig) -> Result<()> {
        let expected: ParamStore<f32> = init_params(cfg, &mut ChaCha8Rng::seed_from_u64(0))?;
        for (name, t) in expected.iter() {
            match self.params.get(name) {
                None => return Err(Error::Format(format!("checkpoint lacks parameter `{name}`"))),
                Some(have) if have.shape() != t.shape() => {
                    return Err(Error::Format(format!(
                        "parameter `{}` has shape {:?} in the checkpoint but the model config needs {:?}",
                        name,
                        have.shape(),
                        t.shape()
                    )))
                }
                _ => {}
            }
        }
        for name in self.params.names() {
            ensure!(expected.get(name).is_some(), "checkpoint parameter `{}` is unknown to the model config", name);
        }
        if cfg.variant.uses_book() {
            let b = self
                .book
                .as_ref()
                .ok_or_else(|| Error::Format("checkpoint has no symbolic book".into()))?;
            if (b.size(), b.dim()) != (cfg.vq.book_size, cfg.vq.dim) {
                return Err(Error::Format(format!(
                    "book `vq.e` has shape [{}, {}] but the model config needs [{}, {}]",
                    b.size(),
                    b.dim(),
                    cfg.vq.book_size,
                    cfg.vq.dim
                )));
            }
        }
        Ok(())
    }

    /// Loads and checks against an expected model config.
    pub fn load_for(path: impl AsRef<Path>, cfg: &ModelConfig) -> Result<Self> {
        let ckpt = Self::load(path)?;
        ckpt.check_against(cfg)?;
        Ok(ckpt)
    }
}
