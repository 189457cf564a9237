//! File formats: checkpoints, voxel grids, PGM images, and OBJ meshes.
//!
//! Every reader reports malformed input with the byte offset where parsing
//! failed.

pub mod checkpoint;
pub mod obj;
pub mod pgm;
pub mod voxfile;

use std::fs;
use std::io::Write;
use std::path::Path;

pub use checkpoint::Checkpoint;

/// Writes `bytes` to `path` via a sibling temporary file and rename, so a
/// failed write never leaves a truncated file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Cursor over a byte slice that knows its offset for error messages.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8], what: &'static str) -> Self {
        ByteReader { bytes, pos: 0, what }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn error(&self, msg: impl Into<String>) -> crate::Error {
        crate::Error::format(self.what, self.offset(), msg)
    }

    pub(crate) fn take(&mut self, n: usize) -> crate::Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(self.error(format!(
                "unexpected end of data: need {n} bytes, {} left",
                self.remaining()
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> crate::Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16_le(&mut self) -> crate::Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub(crate) fn u32_le(&mut self) -> crate::Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn f32_vec_le(&mut self, n: usize) -> crate::Result<Vec<f32>> {
        let start = self.offset();
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| self.error("length overflow"))?)?;
        let values: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(crate::Error::format(
                self.what,
                start + 4 * pos as u64,
                "non-finite value",
            ));
        }
        Ok(values)
    }
}
