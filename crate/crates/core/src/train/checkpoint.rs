//! Self-describing binary checkpoint: `BCTK`, u32 version, u64 header length,
//! JSON header, then little-endian f32 payloads in header order.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"BCTK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams<f32>,
    pub epoch: usize,
    pub val_mae: f64,
    pub train: Option<TrainConfig>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model: ModelConfig,
    tensors: Vec<TensorEntry>,
    epoch: usize,
    val_mae: f64,
    #[serde(default)]
    train: Option<TrainConfig>,
}

impl Checkpoint {
    pub fn config(&self) -> &ModelConfig {
        self.params.config()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            model: self.params.config().clone(),
            tensors: self
                .params
                .names()
                .iter()
                .zip(self.params.tensors())
                .map(|(n, t)| TensorEntry {
                    name: n.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
            epoch: self.epoch,
            val_mae: self.val_mae,
            train: self.train.clone(),
        };
        let json = serde_json::to_vec(&header)
            .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        let mut out = Vec::with_capacity(16 + json.len() + 4 * self.params.param_count());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.params.tensors() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |m: String| Error::Format(format!("checkpoint: {m}"));
        if bytes.len() < 16 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(fmt("missing BCTK magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(fmt(format!(
                "unsupported version {version} (expected {CHECKPOINT_VERSION})"
            )));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = &bytes[16..];
        if body.len() < hlen {
            return Err(fmt(format!("header needs {hlen} bytes, file has {}", body.len())));
        }
        let header: Header = serde_json::from_slice(&body[..hlen])
            .map_err(|e| fmt(format!("bad header: {e}")))?;
        let mut payload = &body[hlen..];
        let expected: usize = header
            .tensors
            .iter()
            .map(|t| 4 * t.shape.iter().product::<usize>())
            .sum();
        if payload.len() != expected {
            return Err(fmt(format!(
                "payload is {} bytes, header describes {expected}",
                payload.len()
            )));
        }
        let mut named = Vec::with_capacity(header.tensors.len());
        for t in header.tensors {
            let n: usize = t.shape.iter().product();
            let (chunk, rest) = payload.split_at(4 * n);
            payload = rest;
            let data = chunk
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            named.push((t.name, Tensor::new(t.shape, data)?));
        }
        let params = ModelParams::from_named(&header.model, named)?;
        Ok(Self {
            params,
            epoch: header.epoch,
            val_mae: header.val_mae,
            train: header.train,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Loads a checkpoint and insists its model config matches `expected`,
    /// naming the first differing tensor shape.
    pub fn load_for(path: &Path, expected: &ModelConfig) -> Result<Self> {
        let ck = Self::load(path)?;
        if ck.config() != expected {
            let want = ModelParams::<f32>::zeros(expected)?;
            for (n, t) in want.names().iter().zip(want.tensors()) {
                match ck.params.get(n) {
                    Some(have) if have.shape() == t.shape() => {}
                    Some(have) => {
                        return Err(Error::Dimension(format!(
                            "{}: tensor {n} has shape {:?}, config expects {:?}",
                            path.display(),
                            have.shape(),
                            t.shape()
                        )))
                    }
                    None => {
                        return Err(Error::Dimension(format!(
                            "{}: tensor {n} missing from checkpoint",
                            path.display()
                        )))
                    }
                }
            }
            return Err(Error::Config(vec![format!(
                "{}: checkpoint model config differs from the requested one",
                path.display()
            )]));
        }
        Ok(ck)
    }
}
