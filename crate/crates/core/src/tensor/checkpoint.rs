//! Binary checkpoint of named tensors.
//!
//! Layout (little endian): magic `GRCKPT\0\0`, `u32` version, `u32` count,
//! then per tensor a `u32` name length, UTF-8 name, `u64` rows, `u64` cols
//! and `rows * cols` `f64` values in row-major order.

use std::fs;
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"GRCKPT\0\0";
const VERSION: u32 = 1;

pub fn save_checkpoint(path: &Path, tensors: &[(String, Tensor)]) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.rows() as u64).to_le_bytes());
        buf.extend_from_slice(&(t.cols() as u64).to_le_bytes());
        for x in t.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::invalid(format!("{}: {msg}", path.display()));
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if r.take(8).ok_or_else(|| bad("truncated header"))? != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = r.u32().ok_or_else(|| bad("truncated header"))?;
    if version != VERSION {
        return Err(bad(&format!("unsupported checkpoint version {version}")));
    }
    let count = r.u32().ok_or_else(|| bad("truncated header"))?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = r.u32().ok_or_else(|| bad("truncated entry"))? as usize;
        let name = std::str::from_utf8(r.take(len).ok_or_else(|| bad("truncated name"))?)
            .map_err(|_| bad("tensor name is not UTF-8"))?
            .to_string();
        let rows = r.u64().ok_or_else(|| bad("truncated shape"))? as usize;
        let cols = r.u64().ok_or_else(|| bad("truncated shape"))? as usize;
        let size = rows.checked_mul(cols).ok_or_else(|| bad("shape overflow"))?;
        let raw = r
            .take(size.checked_mul(8).ok_or_else(|| bad("shape overflow"))?)
            .ok_or_else(|| bad("truncated values"))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        out.push((name, Tensor::from_vec(rows, cols, data)?));
    }
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        let ts = vec![
            (
                "w".to_string(),
                Tensor::from_vec(2, 3, vec![1.0, -2.5, 3.0, 0.1, 1e-300, 7.0]).unwrap(),
            ),
            ("empty".to_string(), Tensor::zeros(0, 4)),
        ];
        save_checkpoint(&path, &ts).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), ts);
    }

    #[test]
    fn rejects_garbage_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        fs::write(&path, b"hello").unwrap();
        assert!(load_checkpoint(&path).is_err());
        save_checkpoint(&path, &[("a".into(), Tensor::scalar(1.0))]).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, &bytes).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
