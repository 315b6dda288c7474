//! Raw tensor files.
//!
//! Layout: `b"CTNS"`, version byte (1), dtype byte (1 = f32, 2 = f64), rank byte `r`,
//! `r` little-endian `u32` extents, then the values as little-endian floats in
//! row-major order.

use std::fs;
use std::path::Path;

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CTNS";
pub const VERSION: u8 = 1;

pub fn encode<T: Scalar>(t: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(7 + 4 * t.shape().len() + T::BYTES * t.numel());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(T::DTYPE);
    out.push(t.shape().len() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(&mut out);
    }
    out
}

fn malformed(offset: usize, msg: impl Into<String>) -> Error {
    Error::Format { what: "CTNS", offset, msg: msg.into() }
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<Tensor<T>> {
    if bytes.len() < 7 {
        return Err(malformed(bytes.len(), "truncated header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(malformed(0, "bad magic"));
    }
    if bytes[4] != VERSION {
        return Err(malformed(4, format!("unsupported version {}", bytes[4])));
    }
    if bytes[5] != T::DTYPE {
        return Err(malformed(5, format!("dtype code {} (expected {})", bytes[5], T::DTYPE)));
    }
    let rank = bytes[6] as usize;
    let mut pos = 7;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let Some(raw) = bytes.get(pos..pos + 4) else {
            return Err(malformed(bytes.len(), "truncated extents"));
        };
        let d = u32::from_le_bytes(raw.try_into().unwrap()) as usize;
        if d == 0 {
            return Err(malformed(pos, "zero extent"));
        }
        shape.push(d);
        pos += 4;
    }
    let numel: usize = shape.iter().product();
    let need = pos + numel * T::BYTES;
    if bytes.len() != need {
        let at = bytes.len().min(need);
        return Err(malformed(at, format!("expected {need} bytes, found {}", bytes.len())));
    }
    let data = bytes[pos..].chunks_exact(T::BYTES).map(T::read_le).collect();
    Tensor::new(shape, data)
}

pub fn save<T: Scalar>(t: &Tensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(t)).map_err(|e| Error::io(path, e))
}

pub fn load<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
