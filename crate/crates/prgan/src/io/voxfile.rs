//! Voxel grid files: `PRGVOX1\n`, an ASCII line `dims D D D\n`, then `D³`
//! little-endian `f32` occupancies in `(i, j, k)` order with `k` fastest.

use std::fs;
use std::path::Path;

use super::{write_atomic, ByteReader};
use crate::error::{Error, Result};
use crate::projection::VoxelGrid;

pub const MAGIC: &[u8; 8] = b"PRGVOX1\n";

pub fn to_bytes(grid: &VoxelGrid) -> Vec<u8> {
    let d = grid.extent();
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(format!("dims {d} {d} {d}\n").as_bytes());
    for v in grid.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<VoxelGrid> {
    let mut r = ByteReader::new(bytes, "voxel file");
    if r.take(MAGIC.len()).ok() != Some(&MAGIC[..]) {
        return Err(Error::format("voxel file", 0, "bad magic, expected PRGVOX1"));
    }
    let line_start = r.offset();
    let rest = &bytes[line_start as usize..];
    let newline = rest
        .iter()
        .take(64)
        .position(|&b| b == b'\n')
        .ok_or_else(|| r.error("missing dims line"))?;
    let line = std::str::from_utf8(r.take(newline + 1)?)
        .map_err(|_| Error::format("voxel file", line_start, "dims line is not ASCII"))?;
    let fields: Vec<&str> = line.trim_end().split(' ').collect();
    let dims: Vec<usize> = match fields.as_slice() {
        ["dims", a, b, c] => [a, b, c]
            .iter()
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format("voxel file", line_start, "dims are not integers"))?,
        _ => return Err(Error::format("voxel file", line_start, "expected `dims D D D`")),
    };
    if dims[0] == 0 || dims[0] != dims[1] || dims[1] != dims[2] {
        return Err(Error::format(
            "voxel file",
            line_start,
            format!("grid must be cubic and non-empty, got {dims:?}"),
        ));
    }
    let d = dims[0];
    let data_start = r.offset();
    let data = r.f32_vec_le(d * d * d)?;
    if r.remaining() != 0 {
        return Err(r.error("trailing bytes after grid data"));
    }
    if let Some(p) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::format(
            "voxel file",
            data_start + 4 * p as u64,
            format!("occupancy {} outside [0, 1]", data[p]),
        ));
    }
    VoxelGrid::new(d, data)
}

pub fn save(grid: &VoxelGrid, path: &Path) -> Result<()> {
    write_atomic(path, &to_bytes(grid))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<VoxelGrid> {
    from_bytes(&fs::read(path)?)
}
