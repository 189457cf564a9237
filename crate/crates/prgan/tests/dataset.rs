use std::f64::consts::PI;

use prgan::dataset::{
    downsample, hard_view, make_dataset, mixed_category, render_views, voxelize_parts, Family, Placement,
    ShapeRecipe, TriangleMesh,
};
use prgan::evaluation::binarize_silhouette;
use prgan::projection::{project_view, Viewpoint, VoxelGrid};
use rand::Rng;

fn sphere(radius: f64) -> TriangleMesh {
    let rings = 96;
    let profile: Vec<(f64, f64)> = (0..=rings)
        .map(|p| {
            let a = PI * p as f64 / rings as f64 - PI / 2.0;
            (radius * a.sin(), radius * a.cos())
        })
        .collect();
    TriangleMesh::lathe(&profile, 192).unwrap()
}

/// Random blobs of full voxels, with empty and full columns mixed in.
fn random_binary_grid(d: usize, rng: &mut impl Rng) -> VoxelGrid {
    let p = rng.random_range(0.002..0.05);
    let data = (0..d * d * d).map(|_| if rng.random_bool(p) { 1.0 } else { 0.0 }).collect();
    VoxelGrid::new(d, data).unwrap()
}

#[test]
fn sphere_volume_matches_analytic_volume() {
    // Boundary cells count as occupied, so the excess shrinks like 1/d.
    let d = 128;
    let g = voxelize_parts(&[sphere(0.4)], d, Placement::UnitCube).unwrap();
    let want = 4.0 / 3.0 * PI * (0.4 * d as f64).powi(3);
    let got = g.occupied_count(0.5) as f64;
    assert!((got / want - 1.0).abs() < 0.05, "occupied {got} vs volume {want:.1}");
}

#[test]
fn front_view_of_a_cuboid_is_its_rectangle() {
    // Half-sizes (x, y, z) in world units; the grid spans [-0.5, 0.5].
    let box_mesh = TriangleMesh::cuboid([0.0; 3], [0.2, 0.3, 0.1]);
    let g = voxelize_parts(&[box_mesh], 64, Placement::UnitCube).unwrap();
    let img = hard_view(&g, 0);
    // x in [-0.2, 0.2] covers columns 19.2..44.8, y covers rows 12.8..51.2.
    for i in 0..64 {
        for j in 0..64 {
            let inside = (12..=51).contains(&i) && (19..=44).contains(&j);
            assert_eq!(img.get(i, j), if inside { 1.0 } else { 0.0 }, "({i}, {j})");
        }
    }
}

#[test]
fn downsampling_conserves_mass_exactly() {
    let mut rng = prgan::seeded_rng(1);
    for _ in 0..20 {
        let g = random_binary_grid(64, &mut rng);
        let bin = rng.random_range(0..8);
        let hi = hard_view(&g, bin);
        let lo = downsample(&hi).unwrap();
        let sum = |v: &[f32]| v.iter().map(|&x| x as f64).sum::<f64>();
        assert_eq!(sum(lo.data()), sum(hi.data()) / 4.0);
        assert!(lo.data().iter().all(|v| [0.0, 0.25, 0.5, 0.75, 1.0].contains(v)));
    }
}

#[test]
fn hard_silhouette_equals_thresholded_projection() {
    let mut rng = prgan::seeded_rng(2);
    let top = (1.0 - (-1.0f64).exp()) as f32;
    for _ in 0..20 {
        let g = random_binary_grid(32, &mut rng);
        for bin in 0..8 {
            let hard = hard_view(&g, bin);
            let soft = project_view(&g, Viewpoint::canonical(bin));
            for tau in [1e-6, 0.001, 0.3, top] {
                let b = binarize_silhouette(&soft, tau).unwrap();
                assert_eq!(b.to_nd().data(), hard.data(), "bin {bin} tau {tau}");
            }
        }
    }
}

#[test]
fn render_views_of_empty_and_full_grids() {
    for (g, v) in [(VoxelGrid::zeros(64), 0.0), (VoxelGrid::full(64), 1.0)] {
        let views = render_views(&g).unwrap();
        assert_eq!(views.len(), 8);
        assert!(views.iter().all(|s| s.extent() == 32 && s.data().iter().all(|&x| x == v)));
    }
}

#[test]
fn one_view_per_object_covers_bins_evenly() {
    let recipes = ShapeRecipe::batch(Family::Box, 1000, 3);
    let m = make_dataset(&recipes, 1, 4).unwrap();
    assert_eq!(m.len(), 1000);
    let mut counts = [0usize; 8];
    m.entries.iter().for_each(|e| counts[e.view] += 1);
    // Binomial(1000, 1/8): mean 125, sigma ~10.5.
    let sigma = (1000.0f64 * 0.125 * 0.875).sqrt();
    for c in counts {
        assert!((c as f64 - 125.0).abs() < 3.0 * sigma, "{counts:?}");
    }
}

#[test]
fn view_subsets_are_distinct_and_seeded() {
    let recipes = ShapeRecipe::batch(Family::LathedProfile, 12, 5);
    for v in [2, 4] {
        let m = make_dataset(&recipes, v, 6).unwrap();
        assert_eq!(m.len(), 12 * v);
        for id in 0..12 {
            let mut views: Vec<usize> = m.entries.iter().filter(|e| e.shape_id == id).map(|e| e.view).collect();
            views.dedup();
            assert_eq!(views.len(), v);
        }
        assert_eq!(m, make_dataset(&recipes, v, 6).unwrap());
    }
    assert!(make_dataset(&recipes, 3, 6).is_err());
}

#[test]
fn mixed_category_keeps_proportions() {
    let sets = vec![
        ShapeRecipe::batch(Family::CuboidComposite, 10, 1),
        ShapeRecipe::batch(Family::LathedProfile, 10, 2),
    ];
    let (recipes, m) = mixed_category(&sets, 8, 9).unwrap();
    assert_eq!(m.len(), 160);
    let chairs = m.entries.iter().filter(|e| recipes[e.shape_id].family == Family::CuboidComposite).count();
    assert_eq!(chairs, 80);
    let (_, again) = mixed_category(&sets, 8, 9).unwrap();
    assert_eq!(m, again);
    let (_, other) = mixed_category(&sets, 8, 10).unwrap();
    assert_ne!(m, other);
}
