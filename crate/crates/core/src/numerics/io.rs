//! `TSR1` tensor files: the ASCII magic `TSR1`, a little-endian `u32` rank,
//! `rank` little-endian `u32` dimensions, then the row-major `f32` payload in
//! little-endian order.

use std::io::{Read, Write};
use std::path::Path;

use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"TSR1";

pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let mut buf = Vec::with_capacity(8 + 4 * t.shape().len() + 4 * t.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_tensor(bytes: &[u8]) -> std::result::Result<Tensor, String> {
    let mut cur = bytes;
    let mut word = || -> std::result::Result<[u8; 4], String> {
        let mut w = [0u8; 4];
        cur.read_exact(&mut w).map_err(|_| "truncated tensor file".to_string())?;
        Ok(w)
    };
    if &word()? != MAGIC {
        return Err("bad magic, expected TSR1".into());
    }
    let rank = u32::from_le_bytes(word()?) as usize;
    if rank > 16 {
        return Err(format!("implausible rank {rank}"));
    }
    let shape = (0..rank)
        .map(|_| word().map(|w| u32::from_le_bytes(w) as usize))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let numel: usize = shape.iter().product();
    let data = (0..numel)
        .map(|_| word().map(f32::from_le_bytes))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if !cur.is_empty() {
        return Err(format!("{} trailing bytes", cur.len()));
    }
    Tensor::new(shape, data).map_err(|e| e.to_string())
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_tensor(t)).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes).map_err(|m| Error::format(path, m))
}
