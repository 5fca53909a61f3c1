//! Binary feature cache: `"ESFC"`, `u32` count, then per clip a `u32` id and
//! `dim` little-endian `f32` values. The dimension is not stored; readers pass it.

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"ESFC";

#[derive(Debug, Error, PartialEq)]
pub enum CacheError {
    #[error("bad magic: not a feature cache")]
    BadMagic,
    #[error("cache declares {count} entries of dim {dim}: expected {expected} bytes, found {actual}")]
    SizeMismatch { count: usize, dim: usize, expected: usize, actual: usize },
    #[error("entry {index} has {actual} values, expected {expected}")]
    DimMismatch { index: usize, expected: usize, actual: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub id: u32,
    pub values: Vec<f32>,
}

pub fn encode(entries: &[CacheEntry], dim: usize) -> Result<Vec<u8>, CacheError> {
    let mut out = Vec::with_capacity(8 + entries.len() * (4 + 4 * dim));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (index, e) in entries.iter().enumerate() {
        if e.values.len() != dim {
            return Err(CacheError::DimMismatch { index, expected: dim, actual: e.values.len() });
        }
        out.extend_from_slice(&e.id.to_le_bytes());
        for v in &e.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8], dim: usize) -> Result<Vec<CacheEntry>, CacheError> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(CacheError::BadMagic);
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let stride = 4 + 4 * dim;
    let expected = count.checked_mul(stride).and_then(|n| n.checked_add(8)).unwrap_or(usize::MAX);
    if bytes.len() != expected {
        return Err(CacheError::SizeMismatch { count, dim, expected, actual: bytes.len() });
    }
    Ok(bytes[8..]
        .chunks_exact(stride)
        .map(|chunk| CacheEntry {
            id: u32::from_le_bytes(chunk[..4].try_into().unwrap()),
            values: chunk[4..].chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect(),
        })
        .collect())
}
