//! Minimal Wavefront OBJ reader: `v` and triangular `f` records only.
//!
//! Other record types (`vn`, `vt`, `o`, `g`, `s`, `usemtl`, …) are skipped.
//! Face corners may use the `v/vt/vn` form; only the vertex index is read and
//! negative indices count back from the latest vertex.

use std::fs;
use std::path::Path;

use crate::dataset::TriangleMesh;
use crate::error::{Error, Result};

pub fn parse(text: &str) -> Result<TriangleMesh> {
    let mut vertices: Vec<[f64; 3]> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    let mut offset = 0u64;
    for raw in text.split_inclusive('\n') {
        let line_offset = offset;
        offset += raw.len() as u64;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut fields = line.split_whitespace();
        let bad = |msg: String| Error::format("obj", line_offset, msg);
        match fields.next() {
            Some("v") => {
                let coords: Vec<f64> = fields
                    .take(3)
                    .map(|f| f.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad("vertex coordinate is not a number".into()))?;
                if coords.len() != 3 || coords.iter().any(|c| !c.is_finite()) {
                    return Err(bad("vertex needs three finite coordinates".into()));
                }
                vertices.push([coords[0], coords[1], coords[2]]);
            }
            Some("f") => {
                let corners: Vec<&str> = fields.collect();
                if corners.len() != 3 {
                    return Err(bad(format!("face has {} corners, only triangles are supported", corners.len())));
                }
                let mut tri = [0usize; 3];
                for (slot, c) in tri.iter_mut().zip(&corners) {
                    let idx: i64 = c
                        .split('/')
                        .next()
                        .unwrap_or("")
                        .parse()
                        .map_err(|_| bad(format!("bad face index {c:?}")))?;
                    let n = vertices.len() as i64;
                    let resolved = if idx > 0 { idx - 1 } else { n + idx };
                    if idx == 0 || resolved < 0 || resolved >= n {
                        return Err(bad(format!("face index {idx} out of range")));
                    }
                    *slot = resolved as usize;
                }
                triangles.push(tri);
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, triangles)
}

pub fn load(path: &Path) -> Result<TriangleMesh> {
    let bytes = fs::read(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| {
        Error::format("obj", e.valid_up_to() as u64, "file is not UTF-8")
    })?;
    parse(text)
}
