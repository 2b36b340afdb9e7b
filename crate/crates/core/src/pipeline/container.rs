//! Binary tensor files: `TNS3`, version, three `u32` dims, then `f32`
//! values, all little-endian, phase-major with columns fastest.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

pub const MAGIC: &[u8; 4] = b"TNS3";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;

pub fn encode(t: &Tensor3) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in t.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Tensor3> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::data(
            path,
            format!("file is {} bytes, shorter than the {HEADER_LEN}-byte header", bytes.len()),
        ));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::data(path, "not a tensor container (bad magic)"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != VERSION {
        return Err(Error::data(path, format!("unsupported container version {version}")));
    }
    let dims = [word(8) as usize, word(12) as usize, word(16) as usize];
    if dims.contains(&0) {
        return Err(Error::data(path, format!("zero dimension in {dims:?}")));
    }
    let expected = dims
        .iter()
        .try_fold(4usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::data(path, format!("dims {dims:?} overflow")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::data(
            path,
            format!(
                "{} payload: expected {expected} bytes for {}×{}×{}, found {}",
                if payload.len() < expected { "truncated" } else { "oversized" },
                dims[0],
                dims[1],
                dims[2],
                payload.len()
            ),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Tensor3::from_vec(dims, data)
}

pub fn write_tensor(path: &Path, t: &Tensor3) -> Result<()> {
    fs::write(path, encode(t)).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: &Path) -> Result<Tensor3> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
