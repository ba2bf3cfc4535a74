//! Shared model-file framing:
//!
//! ```text
//! magic    [u8; 4]
//! version  u16 LE
//! hdr_len  u32 LE
//! header   hdr_len bytes of JSON
//! body     little-endian f32 values, block after block
//! ```
//!
//! Block sizes are recorded in the header by each file type.

use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub fn encode<H: Serialize>(magic: &[u8; 4], version: u16, header: &H, blocks: &[&[f32]]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header)?;
    let body: usize = blocks.iter().map(|b| b.len()).sum();
    let mut out = Vec::with_capacity(10 + json.len() + 4 * body);
    out.extend_from_slice(magic);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for block in blocks {
        for v in *block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Returns the header and the whole body as one float vector.
pub fn decode<H: DeserializeOwned>(magic: &[u8; 4], version: u16, bytes: &[u8]) -> Result<(H, Vec<f32>)> {
    if bytes.len() < 10 || &bytes[..4] != magic {
        return Err(Error::Format(format!("missing {} magic", String::from_utf8_lossy(magic))));
    }
    let found = u16::from_le_bytes([bytes[4], bytes[5]]);
    if found != version {
        return Err(Error::Format(format!("unsupported version {found} (expected {version})")));
    }
    let hdr_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let body_start = 10usize
        .checked_add(hdr_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Format("truncated header".into()))?;
    let header = serde_json::from_slice(&bytes[10..body_start])?;
    let body = &bytes[body_start..];
    if body.len() % 4 != 0 {
        return Err(Error::Format("body is not a whole number of f32 values".into()));
    }
    let values = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((header, values))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Splits `values` into consecutive blocks of the given sizes.
pub fn split_blocks(values: &[f32], sizes: &[usize]) -> Result<Vec<Vec<f32>>> {
    let total: usize = sizes.iter().sum();
    if total != values.len() {
        return Err(Error::Format(format!("body holds {} values, header describes {total}", values.len())));
    }
    let mut out = Vec::with_capacity(sizes.len());
    let mut at = 0;
    for &n in sizes {
        out.push(values[at..at + n].to_vec());
        at += n;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_rejects_garbage() {
        let header = serde_json::json!({"a": 1});
        let bytes = encode(b"TEST", 3, &header, &[&[1.0, 2.5], &[-0.0]]).unwrap();
        let (h, v): (serde_json::Value, Vec<f32>) = decode(b"TEST", 3, &bytes).unwrap();
        assert_eq!(h, header);
        assert_eq!(v, vec![1.0, 2.5, -0.0]);
        assert!(decode::<serde_json::Value>(b"NOPE", 3, &bytes).is_err());
        assert!(decode::<serde_json::Value>(b"TEST", 4, &bytes).is_err());
        assert!(decode::<serde_json::Value>(b"TEST", 3, &bytes[..bytes.len() - 1]).is_err());
        assert!(split_blocks(&v, &[2, 2]).is_err());
        assert_eq!(split_blocks(&v, &[2, 1]).unwrap()[1], vec![-0.0]);
    }
}
