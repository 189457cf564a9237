//! Brute-force f64 oracles for rotation, projection and MMD.

use prgan::projection::VoxelGrid;

/// Rounds to the nearest cell, halves up, after snapping values within 1e-9
/// of a half-integer onto it.
fn round_cell(t: f64) -> i64 {
    let h = (2.0 * t).round() / 2.0;
    let t = if (t - h).abs() < 1e-9 { h } else { t };
    (t + 0.5).floor() as i64
}

/// Forward rotation as a matrix on (x, y, z) = (column, row, depth): azimuth
/// about the vertical axis, then elevation about the horizontal axis.
fn rotation_matrix(elevation: f64, azimuth: f64) -> [[f64; 3]; 3] {
    let (sp, cp) = azimuth.sin_cos();
    let (st, ct) = elevation.sin_cos();
    let ry = [[cp, 0.0, -sp], [0.0, 1.0, 0.0], [sp, 0.0, cp]];
    let rx = [[1.0, 0.0, 0.0], [0.0, ct, -st], [0.0, st, ct]];
    let mut m = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            m[r][c] = (0..3).map(|k| rx[r][k] * ry[k][c]).sum();
        }
    }
    m
}

/// Grid seen from (elevation, azimuth): every output cell reads the source
/// cell nearest to the inverse-rotated position of its center.
pub fn rotate(data: &[f64], d: usize, elevation: f64, azimuth: f64) -> Vec<f64> {
    let m = rotation_matrix(elevation, azimuth);
    let c = (d as f64 - 1.0) / 2.0;
    let mut out = vec![0.0; d * d * d];
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                let p = [j as f64 - c, i as f64 - c, k as f64 - c];
                // Inverse of a rotation is its transpose.
                let src: Vec<i64> = (0..3)
                    .map(|col| round_cell((0..3).map(|r| m[r][col] * p[r]).sum::<f64>() + c))
                    .collect();
                let (sj, si, sk) = (src[0], src[1], src[2]);
                if [si, sj, sk].iter().all(|&v| v >= 0 && v < d as i64) {
                    out[(i * d + j) * d + k] = data[(si as usize * d + sj as usize) * d + sk as usize];
                }
            }
        }
    }
    out
}

pub fn project(data: &[f64], d: usize) -> Vec<f64> {
    data.chunks(d).map(|col| 1.0 - (-col.iter().sum::<f64>()).exp()).collect()
}

pub fn project_view(grid: &VoxelGrid, elevation: f64, azimuth: f64) -> Vec<f64> {
    let data: Vec<f64> = grid.data().iter().map(|&v| v as f64).collect();
    project(&rotate(&data, grid.extent(), elevation, azimuth), grid.extent())
}

/// Rotation by `quarters` × 90° of azimuth as an explicit index permutation.
pub fn quarter_turn(grid: &VoxelGrid, quarters: usize) -> Vec<f32> {
    let d = grid.extent();
    let last = d - 1;
    let mut out = vec![0.0; d * d * d];
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                let (sj, sk) = match quarters % 4 {
                    0 => (j, k),
                    1 => (k, last - j),
                    2 => (last - j, last - k),
                    _ => (last - k, j),
                };
                out[(i * d + j) * d + k] = grid.get(i, sj, sk);
            }
        }
    }
    out
}

/// Binary box of the cells whose centers lie within `half` (row, column,
/// depth) of the grid center.
pub fn centered_cuboid(d: usize, half: [f64; 3]) -> VoxelGrid {
    let c = (d as f64 - 1.0) / 2.0;
    let mut g = VoxelGrid::zeros(d);
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                let inside = (i as f64 - c).abs() <= half[0]
                    && (j as f64 - c).abs() <= half[1]
                    && (k as f64 - c).abs() <= half[2];
                if inside {
                    g.set(i, j, k, 1.0);
                }
            }
        }
    }
    g
}

/// Squared MMD with k = exp(−d²/(2h)) on normalized Hamming distance.
/// `unbiased` drops the diagonal of the within-set terms.
pub fn mmd(a: &[Vec<bool>], b: &[Vec<bool>], h: f64, unbiased: bool) -> f64 {
    let k = |x: &Vec<bool>, y: &Vec<bool>| {
        let d = x.iter().zip(y).filter(|(p, q)| p != q).count() as f64 / x.len() as f64;
        (-d * d / (2.0 * h)).exp()
    };
    let within = |s: &[Vec<bool>]| {
        let mut total = 0.0;
        for (i, x) in s.iter().enumerate() {
            for (j, y) in s.iter().enumerate() {
                if !(unbiased && i == j) {
                    total += k(x, y);
                }
            }
        }
        let n = s.len() as f64;
        total / if unbiased { n * (n - 1.0) } else { n * n }
    };
    let cross: f64 = a.iter().flat_map(|x| b.iter().map(move |y| k(x, y))).sum::<f64>()
        / (a.len() * b.len()) as f64;
    within(a) + within(b) - 2.0 * cross
}
