//! Training data: procedural shapes, voxelization, silhouettes and manifests.
//!
//! A manifest is UTF-8 text with one line per image:
//! `<relative-path> <shape-id> <view-index>`. Voxel datasets use `voxels.txt`
//! with lines `<relative-path> <shape-id>`.

mod mesh;
mod render;
mod shapes;
mod voxelize;

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;

pub use mesh::TriangleMesh;
pub use render::{
    downsample, hard_view, render_recipe, render_views, voxelize_recipe, IMAGE_EXTENT,
    RENDER_EXTENT,
};
pub use shapes::{Family, ShapeRecipe, MAX_RADIUS};
pub use voxelize::{voxelize, voxelize_parts, Placement};

use crate::error::{Error, Result};
use crate::io::{pgm, voxfile};
use crate::projection::{Silhouette, VoxelGrid, CANONICAL_VIEWS};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const VOXEL_MANIFEST_FILE: &str = "voxels.txt";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: String,
    pub shape_id: usize,
    pub view: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{} {} {}\n", e.path, e.shape_id, e.view))
            .collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut offset = 0u64;
        for line in text.split_inclusive('\n') {
            let at = offset;
            offset += line.len() as u64;
            let trimmed = line.trim_end_matches(['\n', '\r']);
            if trimmed.is_empty() {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(' ').collect();
            let bad = |msg: &str| Error::format("manifest", at, msg.to_string());
            let [path, shape, view] = fields.as_slice() else {
                return Err(bad("expected `<path> <shape-id> <view-index>`"));
            };
            let shape_id = shape.parse().map_err(|_| bad("shape id is not an integer"))?;
            let view: usize = view.parse().map_err(|_| bad("view index is not an integer"))?;
            if view >= CANONICAL_VIEWS {
                return Err(bad("view index must be below 8"));
            }
            entries.push(ManifestEntry {
                path: path.to_string(),
                shape_id,
                view,
            });
        }
        Ok(DatasetManifest { entries })
    }

    /// Reads `manifest.txt` from `dir` and checks every listed path exists.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })?;
        let m = Self::parse(&text)?;
        if let Some(missing) = m.entries.iter().find(|e| !dir.join(&e.path).is_file()) {
            return Err(Error::invalid(
                "manifest",
                format!("listed image {} does not exist", missing.path),
            ));
        }
        Ok(m)
    }
}

pub fn image_path(shape_id: usize, view: usize) -> String {
    format!("images/s{shape_id:05}_v{view}.pgm")
}

pub fn voxel_path(shape_id: usize) -> String {
    format!("voxels/s{shape_id:05}.vox")
}

fn check_views(views_per_object: usize) -> Result<()> {
    if ![1, 2, 4, 8].contains(&views_per_object) {
        return Err(Error::invalid(
            "make_dataset",
            format!("views per object must be 1, 2, 4 or 8, got {views_per_object}"),
        ));
    }
    Ok(())
}

/// Picks, for each object, a uniformly random subset of its eight views.
pub fn make_dataset(
    recipes: &[ShapeRecipe],
    views_per_object: usize,
    seed: u64,
) -> Result<DatasetManifest> {
    check_views(views_per_object)?;
    let mut rng = crate::seeded_rng(seed);
    let mut entries = Vec::with_capacity(recipes.len() * views_per_object);
    for shape_id in 0..recipes.len() {
        let mut views: Vec<usize> = (0..CANONICAL_VIEWS).collect();
        views.shuffle(&mut rng);
        let mut chosen = views[..views_per_object].to_vec();
        chosen.sort_unstable();
        entries.extend(chosen.into_iter().map(|view| ManifestEntry {
            path: image_path(shape_id, view),
            shape_id,
            view,
        }));
    }
    Ok(DatasetManifest { entries })
}

/// Pools several recipe sets into one unlabeled, shuffled dataset.
///
/// Returns the concatenated recipes (indexed by the manifest's shape ids) and
/// the manifest.
pub fn mixed_category(
    sets: &[Vec<ShapeRecipe>],
    views_per_object: usize,
    seed: u64,
) -> Result<(Vec<ShapeRecipe>, DatasetManifest)> {
    let mut families: Vec<Family> = sets.iter().flatten().map(|r| r.family).collect();
    families.sort_by_key(|f| f.name());
    families.dedup();
    if families.len() < 2 {
        return Err(Error::invalid("mixed_category", "needs at least two shape families"));
    }
    let recipes: Vec<ShapeRecipe> = sets.iter().flatten().cloned().collect();
    let mut manifest = make_dataset(&recipes, views_per_object, seed)?;
    let mut rng = crate::seeded_rng(seed.wrapping_add(1));
    manifest.entries.shuffle(&mut rng);
    Ok((recipes, manifest))
}

/// Renders every image listed in `manifest` in memory, in manifest order.
pub fn render_images(recipes: &[ShapeRecipe], manifest: &DatasetManifest) -> Result<Vec<Silhouette>> {
    let mut needed: Vec<usize> = manifest.entries.iter().map(|e| e.shape_id).collect();
    needed.sort_unstable();
    needed.dedup();
    if let Some(&bad) = needed.iter().find(|&&id| id >= recipes.len()) {
        return Err(Error::invalid("render_images", format!("shape id {bad} has no recipe")));
    }
    let rendered: Vec<(usize, Vec<Silhouette>)> = needed
        .par_iter()
        .map(|&id| render_recipe(&recipes[id]).map(|v| (id, v)))
        .collect::<Result<_>>()?;
    let lookup = |id: usize| {
        let pos = rendered.binary_search_by_key(&id, |(i, _)| *i).expect("rendered above");
        &rendered[pos].1
    };
    Ok(manifest
        .entries
        .iter()
        .map(|e| lookup(e.shape_id)[e.view].clone())
        .collect())
}

/// Renders and writes the images plus `manifest.txt` under `dir`.
pub fn write_dataset(dir: &Path, recipes: &[ShapeRecipe], manifest: &DatasetManifest) -> Result<()> {
    let images = render_images(recipes, manifest)?;
    fs::create_dir_all(dir.join("images"))?;
    for (entry, img) in manifest.entries.iter().zip(&images) {
        pgm::save(&pgm::GrayImage::from_silhouette(img), &dir.join(&entry.path))?;
    }
    crate::io::write_atomic(&dir.join(MANIFEST_FILE), manifest.to_text().as_bytes())?;
    Ok(())
}

/// Loads the manifest and every image under `dir`.
pub fn load_images(dir: &Path) -> Result<(DatasetManifest, Vec<Silhouette>)> {
    let manifest = DatasetManifest::load(dir)?;
    let images = manifest
        .entries
        .iter()
        .map(|e| pgm::load(&dir.join(&e.path))?.into_silhouette())
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, images))
}

/// Writes each recipe's binary voxelization at `extent` plus `voxels.txt`.
pub fn write_voxels(dir: &Path, recipes: &[ShapeRecipe], extent: usize) -> Result<()> {
    let grids: Vec<VoxelGrid> = recipes
        .par_iter()
        .map(|r| voxelize_recipe(r, extent))
        .collect::<Result<_>>()?;
    fs::create_dir_all(dir.join("voxels"))?;
    let mut listing = String::new();
    for (id, g) in grids.iter().enumerate() {
        voxfile::save(g, &dir.join(voxel_path(id)))?;
        listing.push_str(&format!("{} {id}\n", voxel_path(id)));
    }
    crate::io::write_atomic(&dir.join(VOXEL_MANIFEST_FILE), listing.as_bytes())?;
    Ok(())
}

/// Loads every grid listed in `voxels.txt` under `dir`.
pub fn load_voxels(dir: &Path) -> Result<Vec<VoxelGrid>> {
    let path = dir.join(VOXEL_MANIFEST_FILE);
    if !path.is_file() {
        return Err(Error::invalid(
            "load_voxels",
            format!("{} not found: this dataset has no voxel grids (generate it with --voxels)", path.display()),
        ));
    }
    let text = fs::read_to_string(&path)?;
    let mut grids = Vec::new();
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        let at = offset;
        offset += line.len() as u64;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let rel = line
            .split(' ')
            .next()
            .ok_or_else(|| Error::format("voxel manifest", at, "empty line"))?;
        grids.push(voxfile::load(&dir.join(rel))?);
    }
    Ok(grids)
}
