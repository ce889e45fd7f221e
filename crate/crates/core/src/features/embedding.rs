//! File-backed dense segment embeddings.
//!
//! File layout, all integers little-endian:
//!
//! ```text
//! magic   b"EMB1"
//! dim     u32
//! count   u64
//! count × { id_len: u16, id: [u8; id_len] (UTF-8), values: [f32; dim] }
//! ```
//!
//! Ids are either `doc_id/segment_id` or a bare `segment_id`; lookups try
//! the qualified form first.

use std::collections::HashMap;
use std::io::{self, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::TextNormalizer;
use crate::corpus::Segment;
use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"EMB1";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingProvider {
    dim: usize,
    vectors: HashMap<String, Vec<f32>>,
    normalizer: TextNormalizer,
}

impl EmbeddingProvider {
    /// A provider with no stored vectors; every lookup uses the hashing fallback.
    pub fn hashing_only(dim: usize, normalizer: TextNormalizer) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("embedding dimension must be positive".into()));
        }
        Ok(EmbeddingProvider {
            dim,
            vectors: HashMap::new(),
            normalizer,
        })
    }

    pub fn load(path: &Path, normalizer: TextNormalizer) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Storage(format!("cannot read embedding file {}: {e}", path.display())))?;
        Self::from_bytes(&bytes, normalizer)
    }

    pub fn from_bytes(bytes: &[u8], normalizer: TextNormalizer) -> Result<Self> {
        read_embeddings(bytes, normalizer).map_err(|e| match e {
            Error::Storage(msg) => Error::Storage(msg),
            other => Error::Storage(other.to_string()),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.vectors.contains_key(key)
    }

    /// Stored vector for the segment, else the hashing fallback of its text.
    pub fn embed(&self, doc_id: &str, seg: &Segment) -> Vec<f64> {
        let qualified = format!("{doc_id}/{}", seg.id);
        match self.vectors.get(&qualified).or_else(|| self.vectors.get(&seg.id)) {
            Some(v) => v.iter().map(|&x| f64::from(x)).collect(),
            None => self.hash_embed(&seg.text),
        }
    }

    /// Signed feature hashing of normalized tokens, L2-normalized.
    pub fn hash_embed(&self, text: &str) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for token in self.normalizer.normalize(text) {
            let digest = Sha256::digest(token.as_bytes());
            let h = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
            let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
            out[(h % self.dim as u64) as usize] += sign;
        }
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            out.iter_mut().for_each(|v| *v /= norm);
        }
        out
    }
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Storage(format!("corrupt embedding file: {}", msg.into()))
}

fn read_embeddings(mut bytes: &[u8], normalizer: TextNormalizer) -> Result<EmbeddingProvider> {
    let mut magic = [0u8; 4];
    bytes.read_exact(&mut magic).map_err(|_| corrupt("truncated header"))?;
    if &magic != EMBEDDING_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let dim = read_u32(&mut bytes)? as usize;
    let count = read_u64(&mut bytes)?;
    if dim == 0 {
        return Err(corrupt("dimension is zero"));
    }
    let record_min = 2 + 4 * dim as u64;
    if count.saturating_mul(record_min) > bytes.len() as u64 {
        return Err(corrupt(format!("header claims {count} records but file is too short")));
    }
    let mut vectors = HashMap::with_capacity(count as usize);
    for i in 0..count {
        let mut len = [0u8; 2];
        bytes.read_exact(&mut len).map_err(|_| corrupt(format!("truncated record {i}")))?;
        let mut id = vec![0u8; u16::from_le_bytes(len) as usize];
        bytes.read_exact(&mut id).map_err(|_| corrupt(format!("truncated id in record {i}")))?;
        let id = String::from_utf8(id).map_err(|_| corrupt(format!("record {i} id is not UTF-8")))?;
        let mut values = Vec::with_capacity(dim);
        for _ in 0..dim {
            let mut buf = [0u8; 4];
            bytes.read_exact(&mut buf).map_err(|_| corrupt(format!("truncated vector in record {i}")))?;
            let v = f32::from_le_bytes(buf);
            if !v.is_finite() {
                return Err(corrupt(format!("non-finite value in record {i}")));
            }
            values.push(v);
        }
        if vectors.insert(id.clone(), values).is_some() {
            return Err(corrupt(format!("duplicate id {id:?}")));
        }
    }
    if !bytes.is_empty() {
        return Err(corrupt("trailing bytes after last record"));
    }
    Ok(EmbeddingProvider {
        dim,
        vectors,
        normalizer,
    })
}

fn read_u32(bytes: &mut &[u8]) -> Result<u32> {
    let mut buf = [0u8; 4];
    bytes.read_exact(&mut buf).map_err(|_| corrupt("truncated header"))?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(bytes: &mut &[u8]) -> Result<u64> {
    let mut buf = [0u8; 8];
    bytes.read_exact(&mut buf).map_err(|_| corrupt("truncated header"))?;
    Ok(u64::from_le_bytes(buf))
}

/// Writes records in the `EMB1` layout.
pub fn write_embeddings<W: Write>(mut out: W, dim: usize, records: &[(String, Vec<f32>)]) -> io::Result<()> {
    let dim32 = u32::try_from(dim).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "dim too large"))?;
    out.write_all(EMBEDDING_MAGIC)?;
    out.write_all(&dim32.to_le_bytes())?;
    out.write_all(&(records.len() as u64).to_le_bytes())?;
    for (id, values) in records {
        if values.len() != dim {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("vector for {id:?} has {} values, expected {dim}", values.len()),
            ));
        }
        let len = u16::try_from(id.len())
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "id longer than 65535 bytes"))?;
        out.write_all(&len.to_le_bytes())?;
        out.write_all(id.as_bytes())?;
        for v in values {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}
