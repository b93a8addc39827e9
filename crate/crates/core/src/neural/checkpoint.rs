//! Binary checkpoint container.
//!
//! Layout: 4-byte magic `RMCK`, u32 LE format version, u64 LE header length,
//! UTF-8 JSON header (model kind, architecture, training config, tensor
//! names and shapes), then every tensor's data as f64 LE in header order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ModelParams;
use super::tensor::Tensor;
use super::transformer::{TransformerArch, TransformerModel};
use super::triage::{TriageArch, TriageModel};
use super::{NeuralError, TrainConfig};

const MAGIC: &[u8; 4] = b"RMCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum SavedModel {
    Triage(TriageModel),
    Transformer(TransformerModel),
}

impl SavedModel {
    pub fn params(&self) -> &ModelParams {
        match self {
            SavedModel::Triage(m) => &m.params,
            SavedModel::Transformer(m) => &m.params,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SavedModel::Triage(_) => "triage",
            SavedModel::Transformer(_) => "transformer",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: SavedModel,
    pub config: TrainConfig,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", content = "arch", rename_all = "snake_case")]
enum ArchHeader {
    Triage(TriageArch),
    Transformer(TransformerArch),
}

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ArchHeader,
    train_config: TrainConfig,
    tensors: Vec<TensorHeader>,
}

fn err(msg: impl Into<String>) -> NeuralError {
    NeuralError::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let params = self.model.params();
        let header = Header {
            model: match &self.model {
                SavedModel::Triage(m) => ArchHeader::Triage(m.arch.clone()),
                SavedModel::Transformer(m) => ArchHeader::Transformer(m.arch.clone()),
            },
            train_config: self.config.clone(),
            tensors: params
                .names()
                .iter()
                .zip(&params.tensors)
                .map(|(n, t)| TensorHeader {
                    name: n.clone(),
                    shape: t.shape.clone(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + json.len() + 8 * params.count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in &params.tensors {
            for x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NeuralError> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(err("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(err(format!("unsupported format version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = bytes.get(16..16 + hlen).ok_or_else(|| err("truncated header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| err(format!("bad header: {e}")))?;
        let mut rest = &bytes[16 + hlen..];
        let mut params = ModelParams::new();
        for th in &header.tensors {
            let n: usize = th.shape.iter().product();
            if rest.len() < 8 * n {
                return Err(err(format!("truncated data for `{}`", th.name)));
            }
            let data = rest[..8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            rest = &rest[8 * n..];
            params.insert(&th.name, Tensor::new(th.shape.clone(), data));
        }
        if !rest.is_empty() {
            return Err(err(format!("{} trailing bytes", rest.len())));
        }
        let model = match header.model {
            ArchHeader::Triage(arch) => {
                let expected = TriageModel::new(arch.clone(), 0, true);
                check_layout(&expected.params, &params)?;
                SavedModel::Triage(TriageModel { arch, params })
            }
            ArchHeader::Transformer(arch) => {
                let expected = TransformerModel::new(arch.clone(), 0);
                check_layout(&expected.params, &params)?;
                SavedModel::Transformer(TransformerModel { arch, params })
            }
        };
        Ok(Self {
            model,
            config: header.train_config,
        })
    }

    /// Writes to a sibling temp file, then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<(), NeuralError> {
        let tmp = path.with_extension("tmp");
        let io = |e: std::io::Error| err(format!("{}: {e}", path.display()));
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(&self.to_bytes()).map_err(io)?;
        f.sync_all().map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, NeuralError> {
        let bytes = fs::read(path).map_err(|e| err(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

fn check_layout(expected: &ModelParams, got: &ModelParams) -> Result<(), NeuralError> {
    if expected.names() != got.names() {
        return Err(err("parameter names do not match the architecture"));
    }
    for (name, (a, b)) in expected.names().iter().zip(expected.tensors.iter().zip(&got.tensors)) {
        if a.shape != b.shape {
            return Err(err(format!("`{name}` has shape {:?}, expected {:?}", b.shape, a.shape)));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let m = TransformerModel::new(TransformerArch::default(), 11);
        let ck = Checkpoint {
            model: SavedModel::Transformer(m),
            config: TrainConfig::default(),
        };
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Checkpoint::from_bytes(b"nope").is_err());
        let m = TransformerModel::new(TransformerArch::default(), 1);
        let ck = Checkpoint {
            model: SavedModel::Transformer(m),
            config: TrainConfig::default(),
        };
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }
}
