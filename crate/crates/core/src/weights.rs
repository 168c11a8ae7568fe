//! The `AMSRW1` weight container.
//!
//! Layout: the 7 magic bytes `AMSRW1\n`, one UTF-8 JSON manifest line
//! `{"tensors":[{"name":..,"shape":[..],"offset":..}, ..]}` terminated by
//! `\n`, then a contiguous little-endian `f32` payload. Offsets are byte
//! offsets into the payload, strictly ascending and back to back.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 7] = b"AMSRW1\n";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorEntry {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    tensors: Vec<TensorEntry>,
}

/// Named tensors backed by one flat payload.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    entries: Vec<TensorEntry>,
    payload: Vec<f32>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, shape: &[usize], data: &[f32]) -> Result<()> {
        let name = name.into();
        if self.entries.iter().any(|e| e.name == name) {
            return Err(Error::binding(format!("duplicate tensor '{name}'")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::binding(format!(
                "tensor '{name}': shape {shape:?} needs {numel} values, got {}",
                data.len()
            )));
        }
        self.entries.push(TensorEntry {
            name,
            shape: shape.to_vec(),
            offset: self.payload.len() * 4,
        });
        self.payload.extend_from_slice(data);
        Ok(())
    }

    pub fn entries(&self) -> &[TensorEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<(&[usize], &[f32])> {
        let e = self.entries.iter().find(|e| e.name == name)?;
        let start = e.offset / 4;
        Some((&e.shape, &self.payload[start..start + e.numel()]))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = serde_json::to_string(&Manifest {
            tensors: self.entries.clone(),
        })
        .expect("manifest serializes");
        let mut out = Vec::with_capacity(MAGIC.len() + manifest.len() + 1 + self.payload.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(manifest.as_bytes());
        out.push(b'\n');
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let rest = bytes
            .strip_prefix(MAGIC.as_slice())
            .ok_or_else(|| Error::binding("bad magic: not an AMSRW1 container"))?;
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::binding("manifest line is not terminated"))?;
        let line = std::str::from_utf8(&rest[..nl]).map_err(|_| Error::binding("manifest is not UTF-8"))?;
        let manifest: Manifest =
            serde_json::from_str(line).map_err(|e| Error::binding(format!("manifest is not valid JSON: {e}")))?;
        let body = &rest[nl + 1..];

        let mut expected = 0usize;
        for e in &manifest.tensors {
            if e.offset != expected {
                return Err(Error::binding(format!(
                    "manifest mismatch: tensor '{}' at offset {}, expected {}",
                    e.name, e.offset, expected
                )));
            }
            expected += e.numel() * 4;
        }
        if body.len() != expected {
            return Err(Error::binding(format!(
                "manifest mismatch: manifest describes {expected} payload bytes, file has {}",
                body.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = manifest.tensors.iter().find(|e| !seen.insert(e.name.as_str())) {
            return Err(Error::binding(format!("duplicate tensor '{}'", dup.name)));
        }

        let payload: Vec<f32> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if let Some(i) = payload.iter().position(|v| !v.is_finite()) {
            return Err(Error::binding(format!("non-finite weight at payload index {i}")));
        }
        Ok(Self {
            entries: manifest.tensors,
            payload,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> WeightStore {
        let mut ws = WeightStore::new();
        ws.insert("a", &[2, 3], &[1., 2., 3., 4., 5., 6.]).unwrap();
        ws.insert("b", &[1], &[-0.5]).unwrap();
        ws
    }

    #[test]
    fn roundtrip() {
        let ws = sample();
        let bytes = ws.to_bytes();
        assert!(bytes.starts_with(MAGIC));
        let back = WeightStore::from_bytes(&bytes).unwrap();
        assert_eq!(back, ws);
        assert_eq!(back.get("b").unwrap(), (&[1usize][..], &[-0.5f32][..]));
        assert!(back.get("c").is_none());
        assert_eq!(back.entries()[1].offset, 24);
    }

    #[test]
    fn empty_store_roundtrips() {
        let ws = WeightStore::new();
        assert_eq!(WeightStore::from_bytes(&ws.to_bytes()).unwrap(), ws);
    }

    #[test]
    fn corruptions_are_binding_errors() {
        let good = sample().to_bytes();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        let truncated = &good[..good.len() - 4];
        let mut extra = good.clone();
        extra.extend_from_slice(&[0; 4]);
        let no_newline = &good[..MAGIC.len() + 3];

        for bytes in [&bad_magic[..], truncated, &extra[..], no_newline, b"AMSRW1\nnot json\n"] {
            assert!(matches!(WeightStore::from_bytes(bytes), Err(Error::Binding(_))));
        }
    }

    #[test]
    fn rejects_gapped_offsets_and_duplicates() {
        let mut ws = sample();
        assert!(ws.insert("a", &[1], &[0.0]).is_err());
        assert!(ws.insert("c", &[2], &[0.0]).is_err());
        ws.entries[1].offset = 28;
        assert!(WeightStore::from_bytes(&ws.to_bytes()).is_err());
    }
}
