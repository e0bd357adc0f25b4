use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CWTO";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Named `f32` tensor stored in a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl TensorEntry {
    pub fn new(name: String, shape: Vec<usize>, data: Vec<f32>) -> Self {
        Self { name, shape, data }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointData {
    /// Free-form JSON: layer specs, training config, seed, counters.
    pub meta: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    tensors: Vec<TensorHeader>,
}

impl CheckpointData {
    pub fn encode(&self) -> Result<Vec<u8>> {
        for t in &self.tensors {
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(Error::Shape(format!(
                    "tensor {} has shape {:?} but {} values",
                    t.name,
                    t.shape,
                    t.data.len()
                )));
            }
        }
        let header = Header {
            meta: self.meta.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| TensorHeader { name: t.name.clone(), shape: t.shape.clone() })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Config(e.to_string()))?;
        let values: usize = self.tensors.iter().map(|t| t.data.len()).sum();
        let mut out = Vec::with_capacity(12 + json.len() + 4 * values);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    /// `origin` names the source in error messages.
    pub fn decode(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |reason: String| Error::format(origin, reason);
        if bytes.len() < 12 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(bad("not a CWTO checkpoint".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = bytes
            .get(12..12 + hlen)
            .ok_or_else(|| bad("truncated header".into()))?;
        let header: Header =
            serde_json::from_slice(body).map_err(|e| bad(format!("invalid header: {e}")))?;
        let mut offset = 12 + hlen;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for t in header.tensors {
            let n: usize = t.shape.iter().product();
            let raw = bytes
                .get(offset..offset + 4 * n)
                .ok_or_else(|| bad(format!("truncated data for tensor {}", t.name)))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            offset += 4 * n;
            tensors.push(TensorEntry { name: t.name, shape: t.shape, data });
        }
        if offset != bytes.len() {
            return Err(bad(format!("{} trailing bytes", bytes.len() - offset)));
        }
        Ok(Self { meta: header.meta, tensors })
    }

    pub fn tensor_map(&self) -> std::collections::HashMap<String, TensorEntry> {
        self.tensors.iter().map(|t| (t.name.clone(), t.clone())).collect()
    }
}

/// Writes atomically through a sibling temporary file.
pub fn write_checkpoint(path: &Path, data: &CheckpointData) -> Result<()> {
    let bytes = data.encode()?;
    let tmp = path.with_extension("tmp");
    let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
    file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<CheckpointData> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    CheckpointData::decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CheckpointData {
        CheckpointData {
            meta: serde_json::json!({"seed": 7, "step": 3}),
            tensors: vec![
                TensorEntry::new("a".into(), vec![2, 2], vec![1.0, -0.5, f32::MIN_POSITIVE, 3.25]),
                TensorEntry::new("b".into(), vec![1], vec![0.1]),
            ],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let data = sample();
        let bytes = data.encode().unwrap();
        assert_eq!(&bytes[..4], b"CWTO");
        let back = CheckpointData::decode(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn rejects_truncation_and_bad_magic() {
        let bytes = sample().encode().unwrap();
        assert!(CheckpointData::decode(&bytes[..bytes.len() - 1], Path::new("x")).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        let err = CheckpointData::decode(&wrong, Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("CWTO"));
    }

    #[test]
    fn shape_mismatch_is_refused() {
        let mut data = sample();
        data.tensors[1].shape = vec![2];
        assert!(matches!(data.encode(), Err(Error::Shape(_))));
    }
}
