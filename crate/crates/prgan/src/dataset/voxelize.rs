//! Binary voxelization by point sampling.
//!
//! A voxel is set when it contains at least one sample. Surface samples lie on
//! a barycentric lattice over each triangle, spaced at most half a voxel apart;
//! interior samples are the voxel centers, classified by parity ray casting
//! along the depth axis.

use super::mesh::TriangleMesh;
use crate::error::{Error, Result};
use crate::projection::VoxelGrid;

/// How world coordinates are placed in the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Placement {
    /// Scale and translate the bounding box to span the grid (largest axis).
    Fit,
    /// World cube `[−0.5, 0.5]³` maps onto the grid unchanged.
    UnitCube,
}

/// World → continuous grid coordinates `(i, j, k)`: `i` follows −y, `j` follows
/// x, `k` follows z; cell `a` covers `[a, a + 1)`.
#[derive(Clone, Copy, Debug)]
struct Frame {
    scale: f64,
    center: [f64; 3],
    half_extent: f64,
}

impl Frame {
    fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        [
            self.half_extent - (p[1] - self.center[1]) * self.scale,
            self.half_extent + (p[0] - self.center[0]) * self.scale,
            self.half_extent + (p[2] - self.center[2]) * self.scale,
        ]
    }
}

/// Voxelizes one mesh, fitted to the grid.
pub fn voxelize(mesh: &TriangleMesh, extent: usize) -> Result<VoxelGrid> {
    voxelize_parts(std::slice::from_ref(mesh), extent, Placement::Fit)
}

/// Voxelizes the union of closed parts. Each part is ray-cast on its own, so
/// overlapping parts do not cancel each other's interiors.
pub fn voxelize_parts(parts: &[TriangleMesh], extent: usize, placement: Placement) -> Result<VoxelGrid> {
    if extent == 0 {
        return Err(Error::invalid("voxelize", "extent must be positive"));
    }
    let area: f64 = parts.iter().map(|m| m.area()).sum();
    if area <= 0.0 || !area.is_finite() {
        return Err(Error::invalid("voxelize", "mesh has zero total area"));
    }
    let d = extent as f64;
    let frame = match placement {
        Placement::UnitCube => Frame {
            scale: d,
            center: [0.0; 3],
            half_extent: d / 2.0,
        },
        Placement::Fit => {
            let (mut lo, mut hi) = ([f64::INFINITY; 3], [f64::NEG_INFINITY; 3]);
            for (plo, phi) in parts.iter().filter_map(|m| m.bounds()) {
                for a in 0..3 {
                    lo[a] = lo[a].min(plo[a]);
                    hi[a] = hi[a].max(phi[a]);
                }
            }
            let span = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
            if span <= 0.0 {
                return Err(Error::invalid("voxelize", "mesh has zero extent"));
            }
            Frame {
                scale: d / span,
                center: [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0, (lo[2] + hi[2]) / 2.0],
                half_extent: d / 2.0,
            }
        }
    };
    let mut grid = vec![0.0f32; extent.pow(3)];
    for part in parts {
        let tris: Vec<[[f64; 3]; 3]> = (0..part.triangles().len())
            .map(|t| part.corners(t).map(|p| frame.apply(p)))
            .collect();
        mark_surface(&tris, extent, &mut grid);
        fill_interior(&tris, extent, &mut grid);
    }
    VoxelGrid::new(extent, grid)
}

fn cell_of(c: f64, extent: usize) -> Option<usize> {
    const EDGE: f64 = 1e-9;
    let d = extent as f64;
    if c >= 0.0 && c < d {
        Some(c.floor() as usize)
    } else if c >= d && c <= d + EDGE {
        Some(extent - 1)
    } else if (-EDGE..0.0).contains(&c) {
        Some(0)
    } else {
        None
    }
}

fn mark_surface(tris: &[[[f64; 3]; 3]], extent: usize, grid: &mut [f32]) {
    for [a, b, c] in tris {
        let longest = [(a, b), (b, c), (c, a)]
            .iter()
            .map(|(p, q)| super::mesh::norm(super::mesh::sub(**p, **q)))
            .fold(0.0, f64::max);
        let n = ((2.0 * longest).ceil() as usize).max(1);
        for u in 0..=n {
            for v in 0..=n - u {
                let (s, t) = (u as f64 / n as f64, v as f64 / n as f64);
                let w = 1.0 - s - t;
                let p: [f64; 3] = std::array::from_fn(|ax| w * a[ax] + s * b[ax] + t * c[ax]);
                if let (Some(i), Some(j), Some(k)) =
                    (cell_of(p[0], extent), cell_of(p[1], extent), cell_of(p[2], extent))
                {
                    grid[(i * extent + j) * extent + k] = 1.0;
                }
            }
        }
    }
}

fn fill_interior(tris: &[[[f64; 3]; 3]], extent: usize, grid: &mut [f32]) {
    // Rays sit slightly off the cell centers so they never graze shared edges
    // of axis-aligned geometry.
    const JITTER_I: f64 = 1.234_567e-7;
    const JITTER_J: f64 = 2.718_281e-7;
    let mut hits: Vec<Vec<f64>> = vec![Vec::new(); extent * extent];
    for [a, b, c] in tris {
        let lo_i = a[0].min(b[0]).min(c[0]);
        let hi_i = a[0].max(b[0]).max(c[0]);
        let lo_j = a[1].min(b[1]).min(c[1]);
        let hi_j = a[1].max(b[1]).max(c[1]);
        let denom = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        if denom.abs() < 1e-18 {
            continue;
        }
        let first = |lo: f64| (lo - 0.5).ceil().max(0.0) as usize;
        let last = |hi: f64| ((hi - 0.5).floor()).min(extent as f64 - 1.0);
        let (ri0, ri1) = (first(lo_i), last(hi_i));
        let (rj0, rj1) = (first(lo_j), last(hi_j));
        if ri1 < 0.0 || rj1 < 0.0 {
            continue;
        }
        for ci in ri0..=ri1 as usize {
            let pi = ci as f64 + 0.5 + JITTER_I;
            for cj in rj0..=rj1 as usize {
                let pj = cj as f64 + 0.5 + JITTER_J;
                let s = ((pi - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (pj - a[1])) / denom;
                let t = ((b[0] - a[0]) * (pj - a[1]) - (pi - a[0]) * (b[1] - a[1])) / denom;
                if s < 0.0 || t < 0.0 || s + t > 1.0 {
                    continue;
                }
                let depth = a[2] + s * (b[2] - a[2]) + t * (c[2] - a[2]);
                hits[ci * extent + cj].push(depth);
            }
        }
    }
    for (col, depths) in hits.iter_mut().enumerate() {
        if depths.len() < 2 {
            continue;
        }
        depths.sort_by(f64::total_cmp);
        for pair in depths.chunks_exact(2) {
            let first = (pair[0] - 0.5).ceil().max(0.0) as usize;
            let last = (pair[1] - 0.5).floor();
            if last < 0.0 {
                continue;
            }
            let last = (last as usize).min(extent - 1);
            for k in first..=last {
                grid[col * extent + k] = 1.0;
            }
        }
    }
}
