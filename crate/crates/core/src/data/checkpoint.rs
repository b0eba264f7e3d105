//! Weight checkpoint container: a flat list of named f32 tensors in a
//! little-endian binary layout.
//!
//! ```text
//! "BSMB"  u32 version  u32 count
//! per tensor: u32 name_len  name bytes (UTF-8)
//!             u32 rank      u64 dims[rank]
//!             f32 data[product(dims)]
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"BSMB";
pub const VERSION: u32 = 1;

// Caps keep a corrupt header from turning into a giant allocation.
const MAX_RANK: usize = 8;
const MAX_NAME: usize = 4096;

/// One named tensor as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

pub fn encode_checkpoint(entries: &[TensorEntry]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in entries {
        debug_assert_eq!(e.data.len(), e.dims.iter().product::<usize>());
        out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        out.extend_from_slice(&(e.dims.len() as u32).to_le_bytes());
        for &d in &e.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &e.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(self.pos, format!("checkpoint truncated reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<TensorEntry>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "signature")? != MAGIC {
        return Err(Error::format(0, "not a weight checkpoint (bad signature)"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported checkpoint version {version}")));
    }
    let count = r.u32("tensor count")? as usize;
    let mut entries = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name_at = r.pos;
        let name_len = r.u32("name length")? as usize;
        if name_len > MAX_NAME {
            return Err(Error::format(name_at, format!("tensor name of {name_len} bytes")));
        }
        let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
            .map_err(|_| Error::format(name_at + 4, "tensor name is not UTF-8"))?
            .to_string();
        let rank_at = r.pos;
        let rank = r.u32("rank")? as usize;
        if rank > MAX_RANK {
            return Err(Error::format(rank_at, format!("tensor rank {rank} is out of range")));
        }
        let mut dims = Vec::with_capacity(rank);
        let mut len = 1usize;
        for _ in 0..rank {
            let dim_at = r.pos;
            let d = r.u64("dimension")?;
            let d = usize::try_from(d)
                .map_err(|_| Error::format(dim_at, format!("dimension {d} is out of range")))?;
            len = len
                .checked_mul(d)
                .ok_or_else(|| Error::format(dim_at, "tensor volume overflows"))?;
            dims.push(d);
        }
        let avail = (bytes.len() - r.pos) / 4;
        if avail < len {
            return Err(Error::format(
                r.pos,
                format!("tensor '{name}' wants {len} values, {avail} remain"),
            ));
        }
        let raw = r.take(len * 4, "tensor data")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        entries.push(TensorEntry { name, dims, data });
    }
    if r.pos != bytes.len() {
        return Err(Error::format(
            r.pos,
            format!("{} trailing bytes after the last tensor", bytes.len() - r.pos),
        ));
    }
    Ok(entries)
}

pub fn save_checkpoint(path: &Path, entries: &[TensorEntry]) -> Result<()> {
    Ok(fs::write(path, encode_checkpoint(entries))?)
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<TensorEntry>> {
    decode_checkpoint(&fs::read(path)?)
}
