//! Binary checkpoint container.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, a JSON
//! header, then every tensor listed in the header as little-endian `f64`
//! in header order. Tensor order follows the sorted parameter names, so
//! identical states serialize to identical bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainMode};
use crate::data::BatcherState;
use crate::nn::{Adam, AdamConfig, ParamStore, Tensor};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"FPSEGCK\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub mode: TrainMode,
    /// Optimization steps taken.
    pub iteration: u64,
    pub params: ParamStore,
    pub optimizer: Adam,
    /// Position of the batch streams, for resuming.
    pub batcher: Option<BatcherState>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Group {
    Param,
    FirstMoment,
    SecondMoment,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    group: Group,
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    mode: TrainMode,
    iteration: u64,
    optimizer: AdamConfig,
    optimizer_step: u64,
    batcher: Option<BatcherState>,
    tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut entries = Vec::new();
        let mut payload: Vec<&Tensor> = Vec::new();
        let groups: [(Group, Vec<(&str, &Tensor)>); 3] = [
            (Group::Param, self.params.iter().collect()),
            (
                Group::FirstMoment,
                self.optimizer
                    .first_moment
                    .iter()
                    .map(|(k, v)| (k.as_str(), v))
                    .collect(),
            ),
            (
                Group::SecondMoment,
                self.optimizer
                    .second_moment
                    .iter()
                    .map(|(k, v)| (k.as_str(), v))
                    .collect(),
            ),
        ];
        for (group, tensors) in groups {
            for (name, t) in tensors {
                entries.push(TensorEntry {
                    group,
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                });
                payload.push(t);
            }
        }
        let header = Header {
            config: self.config.clone(),
            mode: self.mode,
            iteration: self.iteration,
            optimizer: self.optimizer.config,
            optimizer_step: self.optimizer.step,
            batcher: self.batcher.clone(),
            tensors: entries,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let values: usize = payload.iter().map(|t| t.len()).sum();
        let mut out = Vec::with_capacity(20 + json.len() + 8 * values);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in payload {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |what: &str| Error::Checkpoint(what.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = &bytes[20..];
        if body.len() < header_len {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..header_len])?;
        let mut data = body[header_len..].chunks_exact(8);
        let mut params = ParamStore::new();
        let mut first = BTreeMap::new();
        let mut second = BTreeMap::new();
        for entry in header.tensors {
            let len: usize = entry.shape.iter().product();
            let values: Vec<f64> = data
                .by_ref()
                .take(len)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            if values.len() != len {
                return Err(Error::Checkpoint(format!(
                    "truncated data for tensor {}",
                    entry.name
                )));
            }
            let t = Tensor::new(entry.shape, values);
            match entry.group {
                Group::Param => params.insert(entry.name, t),
                Group::FirstMoment => {
                    first.insert(entry.name, t);
                }
                Group::SecondMoment => {
                    second.insert(entry.name, t);
                }
            }
        }
        if data.next().is_some() || !data.remainder().is_empty() {
            return Err(bad("trailing bytes after the last tensor"));
        }
        Ok(Self {
            config: header.config,
            mode: header.mode,
            iteration: header.iteration,
            params,
            optimizer: Adam {
                config: header.optimizer,
                step: header.optimizer_step,
                first_moment: first,
                second_moment: second,
            },
            batcher: header.batcher,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut params = ParamStore::new();
        params.insert("b", Tensor::new(vec![2], vec![1.5, -0.25]));
        params.insert("a", Tensor::new(vec![1, 2], vec![f64::MIN_POSITIVE, 3.0]));
        let mut optimizer = Adam::new(AdamConfig::default());
        optimizer.step = 7;
        optimizer
            .first_moment
            .insert("a".into(), Tensor::new(vec![1, 2], vec![0.1, 0.2]));
        optimizer
            .second_moment
            .insert("a".into(), Tensor::new(vec![1, 2], vec![0.3, 0.4]));
        Checkpoint {
            config: TrainConfig::default(),
            mode: TrainMode::Adversarial,
            iteration: 7,
            params,
            optimizer,
            batcher: None,
        }
    }

    #[test]
    fn round_trip_is_exact_and_bytes_are_stable() {
        let c = sample();
        let bytes = c.to_bytes();
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), c);
        assert_eq!(bytes, sample().to_bytes());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        c.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), c);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::from_bytes(b"not a checkpoint at all").is_err());
        let mut wrong_version = bytes.clone();
        wrong_version[8] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&wrong_version),
            Err(Error::Checkpoint(_))
        ));
    }
}
