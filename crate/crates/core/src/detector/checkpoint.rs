//! Model checkpoint file.
//!
//! | offset | size | field                                   |
//! |-------:|-----:|-----------------------------------------|
//! | 0      | 4    | magic `4D 4C 50 31` (`"MLP1"`)          |
//! | 4      | 2    | version `u16` = 1                       |
//! | 6      | 2    | reserved `u16` = 0                      |
//! | 8      | 4    | header length `H` (`u32`)               |
//! | 12     | H    | UTF-8 JSON header                       |
//! | 12+H   | …    | tensors as little-endian `f64`, in the order listed in the header |
//!
//! The header records the architecture, the training configuration, the
//! step count, and the name and shape of every tensor.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{MlpArchitecture, MlpParams};
use super::train::TrainConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"MLP1";
const VERSION: u16 = 1;
const PREFIX_LEN: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    architecture: MlpArchitecture,
    train_config: TrainConfig,
    seed: u64,
    step: u64,
    tensors: Vec<TensorEntry>,
}

/// Trained parameters plus the configuration that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: MlpParams,
    pub train_config: TrainConfig,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let tensors = self.params.all_tensors();
        let header = Header {
            architecture: self.params.arch.clone(),
            train_config: self.train_config.clone(),
            seed: self.train_config.seed,
            step: self.params.step,
            tensors: tensors
                .iter()
                .map(|(name, shape, _)| TensorEntry {
                    name: name.clone(),
                    shape: shape.clone(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let payload: usize = tensors.iter().map(|(_, _, d)| d.len() * 8).sum();
        let mut out = Vec::with_capacity(PREFIX_LEN + json.len() + payload);
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, _, data) in &tensors {
            for v in *data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < PREFIX_LEN {
            return Err(Error::Corruption("checkpoint shorter than its prefix".into()));
        }
        if bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::Format("bad checkpoint magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = &bytes[PREFIX_LEN..];
        if body.len() < header_len {
            return Err(Error::Corruption("checkpoint header is truncated".into()));
        }
        let header: Header = serde_json::from_slice(&body[..header_len])
            .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        header.architecture.validate()?;

        // Build a correctly shaped parameter set, then fill it.
        let mut params = MlpParams::init(&header.architecture, &mut crate::rng::seeded(0))?;
        params.step = header.step;
        let expected: Vec<TensorEntry> = params
            .all_tensors()
            .into_iter()
            .map(|(name, shape, _)| TensorEntry { name, shape })
            .collect();
        if expected != header.tensors {
            return Err(Error::Format(
                "checkpoint tensor list does not match its architecture".into(),
            ));
        }
        let mut payload = &body[header_len..];
        for (entry, dest) in header.tensors.iter().zip(params.all_tensors_mut()) {
            let n = dest.len() * 8;
            if payload.len() < n {
                return Err(Error::Corruption(format!("tensor {} is truncated", entry.name)));
            }
            for (v, chunk) in dest.iter_mut().zip(payload[..n].chunks_exact(8)) {
                *v = f64::from_le_bytes(chunk.try_into().unwrap());
                if !v.is_finite() {
                    return Err(Error::Data(format!("non-finite value in {}", entry.name)));
                }
            }
            payload = &payload[n..];
        }
        if !payload.is_empty() {
            return Err(Error::Corruption(format!(
                "{} trailing bytes after the last tensor",
                payload.len()
            )));
        }
        params.validate()?;
        Ok(Checkpoint {
            params,
            train_config: header.train_config,
        })
    }
}

pub fn write_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
