//! `.ckpt` files: named dense tensors plus a JSON header.
//!
//! Byte layout:
//!
//! | offset      | size | content                                        |
//! |-------------|------|------------------------------------------------|
//! | 0           | 8    | magic `CBCKPT01`                               |
//! | 8           | 8    | header length `H`, unsigned little-endian      |
//! | 16          | H    | header, UTF-8 JSON (see [`Header`])            |
//! | 16 + H      | ...  | tensor payloads, row-major little-endian `f64` |
//!
//! Tensors are stored back to back in header order with no padding; a
//! tensor entry `{name, rows, cols}` owns `rows * cols * 8` bytes. The
//! header's `content_hash` is the lowercase hex SHA-256 of the payload
//! section.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::DenseMatrix;

pub const MAGIC: &[u8; 8] = b"CBCKPT01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub stage: String,
    pub config: Value,
    pub meta: Value,
    pub tensors: Vec<TensorEntry>,
    pub content_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub stage: String,
    pub config: Value,
    pub meta: Value,
    tensors: Vec<(String, DenseMatrix)>,
}

impl Checkpoint {
    pub fn new(stage: impl Into<String>, config: Value) -> Self {
        Self {
            stage: stage.into(),
            config,
            meta: Value::Object(Default::default()),
            tensors: Vec::new(),
        }
    }

    pub fn with_meta(mut self, meta: Value) -> Self {
        self.meta = meta;
        self
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: DenseMatrix) {
        self.tensors.push((name.into(), tensor));
    }

    pub fn push_vec(&mut self, name: impl Into<String>, v: &[f64]) {
        let m = DenseMatrix::from_vec(1, v.len(), v.to_vec()).expect("finite vector");
        self.push(name, m);
    }

    pub fn tensors(&self) -> &[(String, DenseMatrix)] {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> Result<&DenseMatrix> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` not found in {}", self.stage)))
    }

    fn payload(&self) -> Vec<u8> {
        let n: usize = self.tensors.iter().map(|(_, t)| t.as_slice().len()).sum();
        let mut out = Vec::with_capacity(n * 8);
        for (_, t) in &self.tensors {
            for x in t.as_slice() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.payload()))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let payload = self.payload();
        let header = Header {
            stage: self.stage.clone(),
            config: self.config.clone(),
            meta: self.meta.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(name, t)| TensorEntry {
                    name: name.clone(),
                    rows: t.rows(),
                    cols: t.cols(),
                })
                .collect(),
            content_hash: hex::encode(Sha256::digest(&payload)),
        };
        let header = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + header.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = bytes
            .get(16..16 + hlen)
            .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
        let header: Header = serde_json::from_slice(body)?;
        let payload = &bytes[16 + hlen..];
        let expected: usize = header.tensors.iter().map(|t| t.rows * t.cols * 8).sum();
        if payload.len() != expected {
            return Err(Error::Checkpoint(format!(
                "payload is {} bytes, header describes {expected}",
                payload.len()
            )));
        }
        if hex::encode(Sha256::digest(payload)) != header.content_hash {
            return Err(Error::Checkpoint("content hash mismatch".into()));
        }
        let mut tensors = Vec::with_capacity(header.tensors.len());
        let mut off = 0;
        for t in &header.tensors {
            let n = t.rows * t.cols;
            let data = payload[off..off + n * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            off += n * 8;
            tensors.push((t.name.clone(), DenseMatrix::from_vec(t.rows, t.cols, data)?));
        }
        Ok(Self {
            stage: header.stage,
            config: header.config,
            meta: header.meta,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Loads and checks the stage tag.
    pub fn load_stage(path: impl AsRef<Path>, stage: &str) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingStage {
                required: stage.to_string(),
                path: path.to_path_buf(),
            });
        }
        let ck = Self::load(path)?;
        if ck.stage != stage {
            return Err(Error::Checkpoint(format!(
                "{} holds stage `{}`, expected `{stage}`",
                path.display(),
                ck.stage
            )));
        }
        Ok(ck)
    }
}
