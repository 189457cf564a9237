//! Orthographic silhouette rendering from the canonical azimuths.

use super::shapes::ShapeRecipe;
use super::voxelize::{voxelize_parts, Placement};
use crate::error::{Error, Result};
use crate::projection::{project_hard, rotate_grid, Silhouette, Viewpoint, VoxelGrid, CANONICAL_VIEWS};

/// Resolution at which shapes are voxelized and silhouettes rendered.
pub const RENDER_EXTENT: usize = 64;
/// Resolution of training images and generated grids.
pub const IMAGE_EXTENT: usize = 32;

/// 2×2 box average; the extent must be even.
pub fn downsample(img: &Silhouette) -> Result<Silhouette> {
    let d = img.extent();
    if !d.is_multiple_of(2) {
        return Err(Error::invalid("downsample", format!("odd extent {d}")));
    }
    let h = d / 2;
    let mut out = vec![0.0f32; h * h];
    for i in 0..h {
        for j in 0..h {
            let s = img.get(2 * i, 2 * j)
                + img.get(2 * i, 2 * j + 1)
                + img.get(2 * i + 1, 2 * j)
                + img.get(2 * i + 1, 2 * j + 1);
            out[i * h + j] = s / 4.0;
        }
    }
    Silhouette::new(h, out)
}

/// Hard silhouette of `grid` from canonical view `bin` at full resolution.
pub fn hard_view(grid: &VoxelGrid, bin: usize) -> Silhouette {
    project_hard(&rotate_grid(grid, Viewpoint::canonical(bin)), 0.5)
}

/// The eight canonical silhouettes of a binary grid, each rendered at the grid
/// resolution and box-downsampled by two.
pub fn render_views(grid: &VoxelGrid) -> Result<Vec<Silhouette>> {
    (0..CANONICAL_VIEWS)
        .map(|bin| downsample(&hard_view(grid, bin)))
        .collect()
}

/// High-resolution binary voxelization of a recipe.
pub fn voxelize_recipe(recipe: &ShapeRecipe, extent: usize) -> Result<VoxelGrid> {
    voxelize_parts(&recipe.parts()?, extent, Placement::UnitCube)
}

/// The eight 32×32 training silhouettes of a recipe.
pub fn render_recipe(recipe: &ShapeRecipe) -> Result<Vec<Silhouette>> {
    render_views(&voxelize_recipe(recipe, RENDER_EXTENT)?)
}
