//! Named-tensor container file.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic    8 bytes   b"MTXCKPT\0"
//! version  u32       1
//! count    u32       number of tensors
//! count × {
//!     name_len  u32
//!     name      name_len bytes, UTF-8
//!     ndim      u32
//!     dims      ndim × u64
//!     values    prod(dims) × f64
//! }
//! ```
//!
//! Values are stored as raw IEEE-754 bits, so a round trip is bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{EngineError, Tensor};

pub const MAGIC: &[u8; 8] = b"MTXCKPT\0";
pub const VERSION: u32 = 1;

// Guards against allocating absurd sizes from a corrupt header.
const MAX_NAME: u32 = 1 << 16;
const MAX_DIMS: u32 = 16;

pub fn write_tensors<W: Write>(mut w: W, entries: &[(String, Tensor)]) -> Result<(), EngineError> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for (name, t) in entries {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&(t.ndim() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, EngineError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, EngineError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_tensors<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>, EngineError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(EngineError::Format("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(EngineError::Format(format!(
            "unsupported version {version}"
        )));
    }
    let count = read_u32(&mut r)?;
    let mut out = Vec::with_capacity(count.min(4096) as usize);
    for _ in 0..count {
        let len = read_u32(&mut r)?;
        if len > MAX_NAME {
            return Err(EngineError::Format(format!("name length {len}")));
        }
        let mut name = vec![0u8; len as usize];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| EngineError::Format("tensor name is not UTF-8".into()))?;
        let ndim = read_u32(&mut r)?;
        if ndim > MAX_DIMS {
            return Err(EngineError::Format(format!("`{name}`: {ndim} dimensions")));
        }
        let mut shape = Vec::with_capacity(ndim as usize);
        for _ in 0..ndim {
            shape.push(read_u64(&mut r)? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| EngineError::Format(format!("`{name}`: size overflow")))?;
        let mut raw = vec![
            0u8;
            n.checked_mul(8)
                .ok_or_else(|| EngineError::Format("size".into()))?
        ];
        r.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        out.push((name, Tensor::new(shape, data)?));
    }
    Ok(out)
}

pub fn save(path: &Path, entries: &[(String, Tensor)]) -> Result<(), EngineError> {
    write_tensors(BufWriter::new(File::create(path)?), entries)
}

pub fn load(path: &Path) -> Result<Vec<(String, Tensor)>, EngineError> {
    read_tensors(BufReader::new(File::open(path)?))
}
