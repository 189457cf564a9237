//! The differentiable projection module.
//!
//! A voxel grid is indexed `V(i, j, k)` with `i` the image row (y, pointing
//! down), `j` the image column (x), and `k` the depth along the viewing ray.
//! Rotation resamples the grid about its center `(D − 1) / 2` by inverse mapping:
//! every output cell reads the input cell nearest to its pre-image, and pre-images
//! outside the grid read as empty. Projection then turns each line of sight into
//! `1 − exp(−Σ_k V(i, j, k))`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};
use std::sync::Arc;

use crate::autodiff::{Graph, Var, GATHER_ZERO};
use crate::error::{Error, Result};
use crate::tensor::NdValue;

/// Number of canonical training views (azimuths `0°, 45°, …, 315°`).
pub const CANONICAL_VIEWS: usize = 8;

/// Cubic occupancy grid with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    extent: usize,
    data: Vec<f32>,
}

impl VoxelGrid {
    pub fn new(extent: usize, data: Vec<f32>) -> Result<Self> {
        if extent == 0 || data.len() != extent.pow(3) {
            return Err(Error::invalid(
                "VoxelGrid",
                format!("extent {extent} needs {} values, got {}", extent.pow(3), data.len()),
            ));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid("VoxelGrid", format!("occupancy {v} outside [0, 1]")));
        }
        Ok(VoxelGrid { extent, data })
    }

    pub fn zeros(extent: usize) -> Self {
        VoxelGrid {
            extent,
            data: vec![0.0; extent.pow(3)],
        }
    }

    pub fn full(extent: usize) -> Self {
        VoxelGrid {
            extent,
            data: vec![1.0; extent.pow(3)],
        }
    }

    pub fn extent(&self) -> usize {
        self.extent
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.extent + j) * self.extent + k
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[self.index(i, j, k)]
    }

    /// Sets one cell; `value` is clamped into `[0, 1]`.
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f32) {
        let idx = self.index(i, j, k);
        self.data[idx] = value.clamp(0.0, 1.0);
    }

    pub fn occupied_count(&self, threshold: f32) -> usize {
        self.data.iter().filter(|&&v| v > threshold).count()
    }

    /// `[D, D, D]` array view.
    pub fn to_nd(&self) -> NdValue {
        NdValue::new(vec![self.extent; 3], self.data.clone()).expect("cubic shape")
    }

    /// Accepts `[D, D, D]` or `[1, D, D, D]`.
    pub fn from_nd(value: &NdValue) -> Result<Self> {
        let s = value.shape();
        let dims = match s {
            [a, b, c] => [*a, *b, *c],
            [1, a, b, c] => [*a, *b, *c],
            _ => return Err(Error::shape("VoxelGrid::from_nd", s, &[0, 0, 0])),
        };
        if dims[0] != dims[1] || dims[1] != dims[2] {
            return Err(Error::invalid("VoxelGrid::from_nd", format!("non-cubic shape {s:?}")));
        }
        VoxelGrid::new(dims[0], value.data().to_vec())
    }
}

/// Square image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Silhouette {
    extent: usize,
    data: Vec<f32>,
}

impl Silhouette {
    pub fn new(extent: usize, data: Vec<f32>) -> Result<Self> {
        if extent == 0 || data.len() != extent * extent {
            return Err(Error::invalid(
                "Silhouette",
                format!("extent {extent} needs {} values, got {}", extent * extent, data.len()),
            ));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid("Silhouette", format!("value {v} outside [0, 1]")));
        }
        Ok(Silhouette { extent, data })
    }

    pub fn zeros(extent: usize) -> Self {
        Silhouette {
            extent,
            data: vec![0.0; extent * extent],
        }
    }

    pub fn extent(&self) -> usize {
        self.extent
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.extent + j]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn to_nd(&self) -> NdValue {
        NdValue::new(vec![self.extent; 2], self.data.clone()).expect("square shape")
    }
}

/// Viewing direction as spherical angles in radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Viewpoint {
    /// Elevation θ about the image-horizontal axis, in `[−π/2, π/2]`.
    pub elevation: f64,
    /// Azimuth φ about the vertical axis, in `[0, 2π)`.
    pub azimuth: f64,
}

impl Viewpoint {
    /// Azimuth is wrapped into `[0, 2π)`; elevation must lie in `[−π/2, π/2]`.
    pub fn new(elevation: f64, azimuth: f64) -> Result<Self> {
        if !elevation.is_finite() || !azimuth.is_finite() {
            return Err(Error::invalid("Viewpoint", "angles must be finite"));
        }
        if elevation.abs() > FRAC_PI_2 + 1e-12 {
            return Err(Error::invalid(
                "Viewpoint",
                format!("elevation {elevation} outside [-pi/2, pi/2]"),
            ));
        }
        let azimuth = azimuth.rem_euclid(TAU);
        Ok(Viewpoint {
            elevation: elevation.clamp(-FRAC_PI_2, FRAC_PI_2),
            azimuth: if azimuth >= TAU { 0.0 } else { azimuth },
        })
    }

    pub fn identity() -> Self {
        Viewpoint {
            elevation: 0.0,
            azimuth: 0.0,
        }
    }

    /// Canonical training view `bin` (0..8): θ = 0, φ = 45°·bin.
    pub fn canonical(bin: usize) -> Self {
        assert!(bin < CANONICAL_VIEWS, "view bin {bin} out of range");
        Viewpoint {
            elevation: 0.0,
            azimuth: bin as f64 * FRAC_PI_4,
        }
    }

    pub fn from_degrees(elevation: f64, azimuth: f64) -> Result<Self> {
        Self::new(elevation.to_radians(), azimuth.to_radians())
    }

    /// The canonical bin this view coincides with, if any.
    pub fn canonical_bin(&self) -> Option<usize> {
        if self.elevation != 0.0 {
            return None;
        }
        (0..CANONICAL_VIEWS).find(|&b| (self.azimuth - b as f64 * FRAC_PI_4).abs() < 1e-12)
    }
}

/// Rounds a fine-grid coordinate to the nearest cell.
///
/// Coordinates within 1e-9 of a half-integer are snapped onto it first, so
/// round-off in the trigonometry never decides the cell; exact halves round up.
pub fn nearest_cell(t: f64) -> i64 {
    let twice = 2.0 * t;
    let snapped = if (twice - twice.round()).abs() < 1e-9 {
        twice.round() / 2.0
    } else {
        t
    };
    (snapped + 0.5).floor() as i64
}

/// Gather table of `rotate_grid`: `table[out]` is the source flat index or
/// [`GATHER_ZERO`] for empty space.
pub fn rotation_table(extent: usize, vp: Viewpoint) -> Vec<u32> {
    let d = extent;
    let c = (d as f64 - 1.0) / 2.0;
    let (sp, cp) = (-vp.azimuth).sin_cos();
    let (st, ct) = (-vp.elevation).sin_cos();
    let mut table = vec![GATHER_ZERO; d * d * d];
    for i in 0..d {
        let y = i as f64 - c;
        for k in 0..d {
            let z = k as f64 - c;
            // Undo elevation (y, z plane) first, then azimuth (x, z plane).
            let y1 = ct * y - st * z;
            let z1 = st * y + ct * z;
            for j in 0..d {
                let x = j as f64 - c;
                let xs = cp * x - sp * z1;
                let zs = sp * x + cp * z1;
                let (si, sj, sk) = (nearest_cell(y1 + c), nearest_cell(xs + c), nearest_cell(zs + c));
                let inside = |v: i64| v >= 0 && v < d as i64;
                if inside(si) && inside(sj) && inside(sk) {
                    table[(i * d + j) * d + k] = ((si as usize * d + sj as usize) * d + sk as usize) as u32;
                }
            }
        }
    }
    table
}

/// Resamples `grid` as seen from `vp` (nearest neighbor, empty outside).
pub fn rotate_grid(grid: &VoxelGrid, vp: Viewpoint) -> VoxelGrid {
    let table = rotation_table(grid.extent, vp);
    let data = table
        .iter()
        .map(|&s| if s == GATHER_ZERO { 0.0 } else { grid.data[s as usize] })
        .collect();
    VoxelGrid {
        extent: grid.extent,
        data,
    }
}

/// `P(i, j) = 1 − exp(−Σ_k V(i, j, k))`.
pub fn project(grid: &VoxelGrid) -> Silhouette {
    let d = grid.extent;
    let data = grid
        .data
        .chunks_exact(d)
        .map(|column| {
            let total: f64 = column.iter().map(|&v| v as f64).sum();
            (-(-total).exp_m1()) as f32
        })
        .collect();
    Silhouette { extent: d, data }
}

pub fn project_view(grid: &VoxelGrid, vp: Viewpoint) -> Silhouette {
    project(&rotate_grid(grid, vp))
}

/// Hard silhouette: 1 where any cell along the ray exceeds `threshold`.
pub fn project_hard(grid: &VoxelGrid, threshold: f32) -> Silhouette {
    let d = grid.extent;
    let data = grid
        .data
        .chunks_exact(d)
        .map(|column| {
            if column.iter().any(|&v| v > threshold) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Silhouette { extent: d, data }
}

/// Differentiable batched projection with cached tables for the canonical views.
#[derive(Clone, Debug)]
pub struct Projector {
    extent: usize,
    canonical: Vec<Arc<Vec<u32>>>,
}

impl Projector {
    pub fn new(extent: usize) -> Self {
        let canonical = (0..CANONICAL_VIEWS)
            .map(|b| Arc::new(rotation_table(extent, Viewpoint::canonical(b))))
            .collect();
        Projector { extent, canonical }
    }

    pub fn extent(&self) -> usize {
        self.extent
    }

    pub fn table(&self, vp: Viewpoint) -> Arc<Vec<u32>> {
        match vp.canonical_bin() {
            Some(b) => Arc::clone(&self.canonical[b]),
            None => Arc::new(rotation_table(self.extent, vp)),
        }
    }

    /// Rotates each grid of a `[N, 1, D, D, D]` (or `[N, D, D, D]`) batch to its
    /// own view; output `[N, D, D, D]`.
    pub fn rotate(&self, g: &mut Graph, grids: Var, views: &[Viewpoint]) -> Result<Var> {
        let d = self.extent;
        let cells = d * d * d;
        let shape = g.shape(grids).to_vec();
        let n = shape[0];
        if shape.iter().product::<usize>() != n * cells || shape[shape.len() - 3..] != [d, d, d] {
            return Err(Error::shape("project", &shape, &[n, 1, d, d, d]));
        }
        if views.len() != n {
            return Err(Error::invalid(
                "project",
                format!("{} views for a batch of {n}", views.len()),
            ));
        }
        let mut index = Vec::with_capacity(n * cells);
        for (s, vp) in views.iter().enumerate() {
            let offset = (s * cells) as u32;
            let table = self.table(*vp);
            index.extend(
                table
                    .iter()
                    .map(|&i| if i == GATHER_ZERO { GATHER_ZERO } else { i + offset }),
            );
        }
        g.gather(grids, Arc::new(index), &[n, d, d, d])
    }

    /// `project_view` on a batch; output `[N, D, D]`.
    pub fn project_views(&self, g: &mut Graph, grids: Var, views: &[Viewpoint]) -> Result<Var> {
        let rotated = self.rotate(g, grids, views)?;
        g.depth_project(rotated)
    }
}
