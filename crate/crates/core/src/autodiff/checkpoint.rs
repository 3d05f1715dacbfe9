//! Binary parameter file.
//!
//! Layout, all integers `u32` little-endian:
//! `b"SMPR"`, version, header byte length, UTF-8 header text, tensor count,
//! then per tensor: name length, name bytes, rank, dims, `f32` LE values.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::params::ParamStore;

pub const MAGIC: &[u8; 4] = b"SMPR";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: String,
    pub entries: Vec<CheckpointEntry>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::invalid(format!("{v} does not fit a u32 field")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode_checkpoint<T: Scalar>(header: &str, store: &ParamStore<T>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + store.scalar_count() * 4);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION as usize)?;
    put_u32(&mut out, header.len())?;
    out.extend_from_slice(header.as_bytes());
    put_u32(&mut out, store.len())?;
    for (name, t) in store.iter() {
        put_u32(&mut out, name.len())?;
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.shape().len())?;
        for &d in t.shape() {
            put_u32(&mut out, d)?;
        }
        for v in t.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_checkpoint<T: Scalar, W: Write>(w: &mut W, header: &str, store: &ParamStore<T>) -> std::io::Result<()> {
    let bytes = encode_checkpoint(header, store).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e.to_string()))?;
    w.write_all(&bytes)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| Error::Format {
            what: "checkpoint",
            message: format!("truncated at byte {}", self.pos),
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn string(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Format { what: "checkpoint", message: "non UTF-8 text".into() })
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::Format { what: "checkpoint", message: "bad magic bytes".into() });
    }
    let version = c.u32()?;
    if version != FORMAT_VERSION as usize {
        return Err(Error::Format { what: "checkpoint", message: format!("unsupported version {version}") });
    }
    let hlen = c.u32()?;
    let header = c.string(hlen)?;
    let count = c.u32()?;
    let mut entries = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let nlen = c.u32()?;
        let name = c.string(nlen)?;
        let rank = c.u32()?;
        let shape = (0..rank).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
        let len = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or_else(|| Error::Format {
            what: "checkpoint",
            message: format!("shape {shape:?} overflows"),
        })?;
        let raw = c.take(len.checked_mul(4).ok_or_else(|| Error::Format {
            what: "checkpoint",
            message: "tensor too large".into(),
        })?)?;
        let values = raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        entries.push(CheckpointEntry { name, shape, values });
    }
    if c.pos != bytes.len() {
        return Err(Error::Format { what: "checkpoint", message: "trailing bytes".into() });
    }
    Ok(Checkpoint { header, entries })
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Checkpoint> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(|e| Error::io("<checkpoint>", e))?;
    decode_checkpoint(&buf)
}

impl Checkpoint {
    /// Copies every entry into `store`, which must hold exactly the same names and shapes.
    pub fn load_into<T: Scalar>(&self, store: &mut ParamStore<T>) -> Result<()> {
        if self.entries.len() != store.len() {
            return Err(Error::Format {
                what: "checkpoint",
                message: format!("{} tensors, model expects {}", self.entries.len(), store.len()),
            });
        }
        for e in &self.entries {
            store.set_values(&e.name, &e.shape, e.values.iter().map(|&v| T::lit(v as f64)).collect())?;
        }
        Ok(())
    }
}
