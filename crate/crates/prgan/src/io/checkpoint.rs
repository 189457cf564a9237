//! Named-tensor checkpoint files.
//!
//! Layout: magic `PRGCKPT1`, `u32` tensor count, then per tensor a `u16` name
//! length, the UTF-8 name, a `u8` rank, `rank` × `u32` extents, and the raw
//! values as `f32`. All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::{write_atomic, ByteReader};
use crate::error::{Error, Result};
use crate::tensor::NdValue;

pub const MAGIC: &[u8; 8] = b"PRGCKPT1";

/// Ordered list of named tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, NdValue)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: NdValue) {
        self.tensors.push((name.into(), value));
    }

    pub fn get(&self, name: &str) -> Option<&NdValue> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    /// Looks up `name`, failing with a message naming the missing tensor.
    pub fn require(&self, name: &str) -> Result<&NdValue> {
        self.get(name)
            .ok_or_else(|| Error::invalid("checkpoint", format!("missing tensor {name:?}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _)| n.as_str())
    }

    /// Appends every tensor of `other`.
    pub fn extend(&mut self, other: Checkpoint) {
        self.tensors.extend(other.tensors);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        let count = u32::try_from(self.tensors.len())
            .map_err(|_| Error::invalid("checkpoint", "too many tensors"))?;
        out.extend_from_slice(&count.to_le_bytes());
        for (name, value) in &self.tensors {
            let len = u16::try_from(name.len())
                .map_err(|_| Error::invalid("checkpoint", format!("name too long: {name}")))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            let rank = u8::try_from(value.rank())
                .map_err(|_| Error::invalid("checkpoint", "rank exceeds 255"))?;
            out.push(rank);
            for &e in value.shape() {
                let e = u32::try_from(e).map_err(|_| Error::invalid("checkpoint", "extent exceeds u32"))?;
                out.extend_from_slice(&e.to_le_bytes());
            }
            for v in value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "checkpoint");
        if r.take(MAGIC.len()).ok() != Some(&MAGIC[..]) {
            return Err(Error::format("checkpoint", 0, "bad magic, expected PRGCKPT1"));
        }
        let count = r.u32_le()?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let len = r.u16_le()? as usize;
            let at = r.offset();
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::format("checkpoint", at, "tensor name is not UTF-8"))?
                .to_string();
            let rank = r.u8()? as usize;
            if rank == 0 {
                return Err(r.error("tensor rank 0"));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let e = r.u32_le()? as usize;
                if e == 0 {
                    return Err(r.error("zero extent"));
                }
                shape.push(e);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |a, &e| a.checked_mul(e))
                .ok_or_else(|| r.error("tensor size overflows"))?;
            let data = r.f32_vec_le(n)?;
            tensors.push((name, NdValue::new(shape, data)?));
        }
        if r.remaining() != 0 {
            return Err(r.error("trailing bytes after last tensor"));
        }
        Ok(Checkpoint { tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
