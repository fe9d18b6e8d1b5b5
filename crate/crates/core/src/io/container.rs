//! Named-tensor container.
//!
//! Layout: magic `ASTC`, u32 LE format version, u64 LE header length, a JSON
//! header listing tensors (name, shape, dtype, byte offset into the payload)
//! and string metadata, then the little-endian f32 payload.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"ASTC";
pub const FORMAT_VERSION: u32 = 1;
const PREAMBLE: usize = 4 + 4 + 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    version: u32,
    metadata: BTreeMap<String, String>,
    tensors: Vec<TensorEntry>,
}

/// Ordered tensors plus string metadata.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    pub metadata: BTreeMap<String, String>,
    tensors: Vec<(String, Tensor<f32>)>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor<f32>) -> Result<()> {
        let name = name.into();
        if self.get(&name).is_some() {
            return Err(Error::Format(format!("duplicate tensor name {name:?}")));
        }
        self.tensors.push((name, t));
        Ok(())
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(String::as_str)
    }

    pub fn require_meta(&self, key: &str) -> Result<&str> {
        self.meta(key)
            .ok_or_else(|| Error::Format(format!("missing metadata key {key:?}")))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor<f32>> {
        self.get(name)
            .ok_or_else(|| Error::Format(format!("missing tensor {name:?}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _)| n.as_str())
    }

    pub fn tensors(&self) -> &[(String, Tensor<f32>)] {
        &self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0u64;
        let mut entries = Vec::with_capacity(self.tensors.len());
        for (name, t) in &self.tensors {
            entries.push(TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                dtype: "f32".into(),
                offset,
            });
            offset += 4 * t.numel() as u64;
        }
        let header = serde_json::to_vec(&Header {
            version: FORMAT_VERSION,
            metadata: self.metadata.clone(),
            tensors: entries,
        })
        .map_err(|e| Error::Format(format!("encoding header: {e}")))?;
        let mut out = Vec::with_capacity(PREAMBLE + header.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < PREAMBLE {
            return Err(Error::Format(format!(
                "file is {} bytes, shorter than the {PREAMBLE}-byte preamble",
                bytes.len()
            )));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format("bad magic, not a tensor container".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "format version {version}, this build reads version {FORMAT_VERSION}"
            )));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let payload_start = PREAMBLE
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| {
                Error::Format(format!(
                    "header truncated: expected {header_len} bytes at offset {PREAMBLE}, found {}",
                    bytes.len() - PREAMBLE
                ))
            })?;
        let header: Header = serde_json::from_slice(&bytes[PREAMBLE..payload_start])
            .map_err(|e| Error::Format(format!("malformed header: {e}")))?;
        if header.version != version {
            return Err(Error::Format(format!(
                "header version {} disagrees with preamble version {version}",
                header.version
            )));
        }
        let payload = &bytes[payload_start..];
        let mut expected = 0u64;
        let mut seen = HashSet::new();
        for e in &header.tensors {
            if e.dtype != "f32" {
                return Err(Error::Format(format!("{}: unsupported dtype {:?}", e.name, e.dtype)));
            }
            if !seen.insert(e.name.as_str()) {
                return Err(Error::Format(format!("duplicate tensor name {:?}", e.name)));
            }
            if e.offset != expected {
                return Err(Error::Format(format!(
                    "{}: offset {} but the previous tensor ends at {expected}",
                    e.name, e.offset
                )));
            }
            if e.shape.is_empty() || e.shape.contains(&0) {
                return Err(Error::Format(format!("{}: invalid shape {:?}", e.name, e.shape)));
            }
            expected += 4 * e.shape.iter().product::<usize>() as u64;
        }
        if payload.len() as u64 != expected {
            let kind = if (payload.len() as u64) < expected { "truncated" } else { "has trailing bytes" };
            return Err(Error::Format(format!(
                "payload {kind}: expected {expected} bytes after offset {payload_start}, found {}",
                payload.len()
            )));
        }
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            let start = e.offset as usize;
            let n: usize = e.shape.iter().product();
            let data = payload[start..start + 4 * n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            tensors.push((e.name, Tensor::new(e.shape, data)?));
        }
        Ok(Container {
            metadata: header.metadata,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format(m) => Error::data(path, m),
            other => other,
        })
    }
}
