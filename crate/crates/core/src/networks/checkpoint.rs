//! Checkpoint container: `SSCK` magic, little-endian `u32` header length, a
//! JSON header, then every tensor as little-endian `f64` in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, NetError, Network};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"SSCK";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub architecture: Architecture,
    pub seed: u64,
    pub epoch: usize,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_network(net: &dyn Network, seed: u64, epoch: usize) -> Self {
        let tensors = net.state();
        let header = CheckpointHeader {
            architecture: net.architecture(),
            seed,
            epoch,
            tensors: tensors
                .iter()
                .map(|(name, t)| TensorEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        Self { header, tensors }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let payload: usize = self.tensors.iter().map(|(_, t)| t.numel() * 8).sum();
        let mut out = Vec::with_capacity(8 + header.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NetError> {
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(NetError::Checkpoint("bad magic".into()));
        }
        let hlen = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let body = bytes
            .get(8..8 + hlen)
            .ok_or_else(|| NetError::Checkpoint("truncated header".into()))?;
        let header: CheckpointHeader =
            serde_json::from_slice(body).map_err(|e| NetError::Checkpoint(format!("header: {e}")))?;
        let mut payload = &bytes[8 + hlen..];
        let expected: usize = header
            .tensors
            .iter()
            .map(|e| e.shape.iter().product::<usize>() * 8)
            .sum();
        if payload.len() != expected {
            return Err(NetError::Checkpoint(format!(
                "payload is {} bytes, header describes {expected}",
                payload.len()
            )));
        }
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in &header.tensors {
            let n: usize = e.shape.iter().product();
            let (chunk, rest) = payload.split_at(n * 8);
            let data = chunk
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            tensors.push((e.name.clone(), Tensor::new(e.shape.clone(), data)?));
            payload = rest;
        }
        Ok(Self { header, tensors })
    }
}

pub fn write_checkpoint(path: &Path, net: &dyn Network, seed: u64, epoch: usize) -> Result<(), NetError> {
    fs::write(path, Checkpoint::from_network(net, seed, epoch).to_bytes())?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, NetError> {
    Checkpoint::from_bytes(&fs::read(path)?)
}
