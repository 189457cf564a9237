use crate::error::{Error, Result};

/// Indexed triangle mesh in world coordinates (y up, centered at the origin).
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<[f64; 3]>,
    triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<[f64; 3]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::invalid("TriangleMesh", "non-finite vertex coordinate"));
        }
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= vertices.len())) {
            return Err(Error::invalid(
                "TriangleMesh",
                format!("triangle {t:?} indexes past {} vertices", vertices.len()),
            ));
        }
        Ok(TriangleMesh { vertices, triangles })
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn corners(&self, t: usize) -> [[f64; 3]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.corners(t);
                let u = sub(b, a);
                let v = sub(c, a);
                0.5 * norm(cross(u, v))
            })
            .sum()
    }

    /// `(min, max)` corners of the axis-aligned bounding box.
    pub fn bounds(&self) -> Option<([f64; 3], [f64; 3])> {
        let first = *self.vertices.first()?;
        let mut lo = first;
        let mut hi = first;
        for v in &self.vertices {
            for a in 0..3 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        Some((lo, hi))
    }

    pub fn map_vertices(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|&v| f(v)).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Closed axis-aligned box with the given center and half extents.
    pub fn cuboid(center: [f64; 3], half: [f64; 3]) -> TriangleMesh {
        let mut vertices = Vec::with_capacity(8);
        for corner in 0..8 {
            let s = |bit: usize| if corner >> bit & 1 == 1 { 1.0 } else { -1.0 };
            vertices.push([
                center[0] + s(0) * half[0],
                center[1] + s(1) * half[1],
                center[2] + s(2) * half[2],
            ]);
        }
        // Corner index bits: x = 1, y = 2, z = 4.
        let quads = [
            [0, 2, 6, 4],
            [1, 5, 7, 3],
            [0, 4, 5, 1],
            [2, 3, 7, 6],
            [0, 1, 3, 2],
            [4, 6, 7, 5],
        ];
        let triangles = quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect();
        TriangleMesh { vertices, triangles }
    }

    /// Closed surface of revolution about the y axis.
    ///
    /// `profile` lists `(y, radius)` pairs bottom to top; both ends are capped.
    pub fn lathe(profile: &[(f64, f64)], segments: usize) -> Result<TriangleMesh> {
        if profile.len() < 2 || segments < 3 {
            return Err(Error::invalid("lathe", "need ≥ 2 profile points and ≥ 3 segments"));
        }
        let mut vertices = Vec::new();
        for &(y, r) in profile {
            for s in 0..segments {
                let a = std::f64::consts::TAU * s as f64 / segments as f64;
                vertices.push([r * a.cos(), y, r * a.sin()]);
            }
        }
        let ring = |p: usize, s: usize| p * segments + s % segments;
        let mut triangles = Vec::new();
        for p in 0..profile.len() - 1 {
            for s in 0..segments {
                let (a, b, c, d) = (ring(p, s), ring(p, s + 1), ring(p + 1, s + 1), ring(p + 1, s));
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
        let bottom = vertices.len();
        vertices.push([0.0, profile[0].0, 0.0]);
        let top = vertices.len();
        vertices.push([0.0, profile[profile.len() - 1].0, 0.0]);
        let last = profile.len() - 1;
        for s in 0..segments {
            triangles.push([bottom, ring(0, s + 1), ring(0, s)]);
            triangles.push([top, ring(last, s), ring(last, s + 1)]);
        }
        TriangleMesh::new(vertices, triangles)
    }
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}
