//! Procedural shape families standing in for scanned model categories.
//!
//! Every family builds closed parts inside the world cube `[−0.5, 0.5]³`,
//! upright along y and centered on the y axis, with horizontal radius at most
//! [`MAX_RADIUS`] so that any azimuthal rotation stays inside the grid.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::mesh::TriangleMesh;
use crate::error::{Error, Result};

pub const MAX_RADIUS: f64 = 0.46;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    /// Seat, four legs and an optional back: chairs and tables.
    CuboidComposite,
    /// Surfaces of revolution with a wavy profile: vases.
    LathedProfile,
    /// A single centered box.
    Box,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::CuboidComposite, Family::LathedProfile, Family::Box];

    pub fn name(self) -> &'static str {
        match self {
            Family::CuboidComposite => "cuboid-composite",
            Family::LathedProfile => "lathed-profile",
            Family::Box => "box",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cuboid-composite" | "chair" => Ok(Family::CuboidComposite),
            "lathed-profile" | "vase" => Ok(Family::LathedProfile),
            "box" => Ok(Family::Box),
            _ => Err(Error::invalid(
                "family",
                format!("unknown family {s:?} (expected cuboid-composite, lathed-profile or box)"),
            )),
        }
    }
}

/// A family plus the parameters drawn for one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeRecipe {
    pub family: Family,
    pub seed: u64,
    pub params: Vec<f64>,
}

impl ShapeRecipe {
    /// Draws the parameters of one instance from `seed`.
    pub fn random(family: Family, seed: u64) -> Self {
        let mut rng = crate::seeded_rng(seed);
        let params = match family {
            Family::CuboidComposite => {
                let has_back = rng.random_bool(0.7);
                vec![
                    rng.random_range(0.40..0.65), // width (x)
                    rng.random_range(0.40..0.65), // depth (z)
                    rng.random_range(0.25..0.45), // leg length
                    rng.random_range(0.04..0.10), // seat thickness
                    rng.random_range(0.04..0.09), // leg thickness
                    if has_back { rng.random_range(0.25..0.45) } else { 0.0 }, // back height
                    rng.random_range(0.04..0.08), // back thickness
                ]
            }
            Family::LathedProfile => {
                let mut p = vec![
                    rng.random_range(0.60..0.95), // height
                    rng.random_range(0.12..0.30), // base radius
                ];
                // Four harmonic amplitudes and phases shape the profile.
                for _ in 0..4 {
                    p.push(rng.random_range(-0.08..0.08));
                    p.push(rng.random_range(0.0..std::f64::consts::TAU));
                }
                p
            }
            Family::Box => {
                let hx: f64 = rng.random_range(0.10..0.32);
                let hz: f64 = rng.random_range(0.10..0.32);
                vec![hx, rng.random_range(0.12..0.45), hz]
            }
        };
        ShapeRecipe { family, seed, params }
    }

    /// `count` instances with seeds derived from `seed`.
    pub fn batch(family: Family, count: usize, seed: u64) -> Vec<ShapeRecipe> {
        let mut rng = crate::seeded_rng(seed ^ family_salt(family));
        (0..count)
            .map(|_| ShapeRecipe::random(family, rng.random()))
            .collect()
    }

    /// Closed parts in world coordinates.
    pub fn parts(&self) -> Result<Vec<TriangleMesh>> {
        let p = &self.params;
        let need = match self.family {
            Family::CuboidComposite => 7,
            Family::LathedProfile => 10,
            Family::Box => 3,
        };
        if p.len() != need {
            return Err(Error::invalid(
                "ShapeRecipe",
                format!("{} needs {need} parameters, got {}", self.family, p.len()),
            ));
        }
        let parts = match self.family {
            Family::CuboidComposite => chair(p),
            Family::LathedProfile => vec![vase(p)?],
            Family::Box => vec![TriangleMesh::cuboid([0.0; 3], [p[0], p[1], p[2]])],
        };
        Ok(parts)
    }
}

fn family_salt(f: Family) -> u64 {
    match f {
        Family::CuboidComposite => 0x9e37_79b9_7f4a_7c15,
        Family::LathedProfile => 0xc2b2_ae3d_27d4_eb4f,
        Family::Box => 0x1656_67b1_9e37_79f9,
    }
}

fn chair(p: &[f64]) -> Vec<TriangleMesh> {
    let (w, dp, leg, seat, lt, back, bt) = (p[0], p[1], p[2], p[3], p[4], p[5], p[6]);
    let total = leg + seat + back;
    let bottom = -total / 2.0;
    let seat_y = bottom + leg + seat / 2.0;
    let mut parts = vec![TriangleMesh::cuboid([0.0, seat_y, 0.0], [w / 2.0, seat / 2.0, dp / 2.0])];
    let (lx, lz) = (w / 2.0 - lt / 2.0, dp / 2.0 - lt / 2.0);
    for (sx, sz) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
        parts.push(TriangleMesh::cuboid(
            [sx * lx, bottom + leg / 2.0, sz * lz],
            [lt / 2.0, leg / 2.0, lt / 2.0],
        ));
    }
    if back > 0.0 {
        parts.push(TriangleMesh::cuboid(
            [0.0, bottom + leg + seat + back / 2.0, -dp / 2.0 + bt / 2.0],
            [w / 2.0, back / 2.0, bt / 2.0],
        ));
    }
    parts
}

fn vase(p: &[f64]) -> Result<TriangleMesh> {
    let (height, base) = (p[0], p[1]);
    let rings = 12;
    let profile: Vec<(f64, f64)> = (0..=rings)
        .map(|r| {
            let u = r as f64 / rings as f64;
            let mut radius = base;
            for h in 0..4 {
                let (amp, phase) = (p[2 + 2 * h], p[3 + 2 * h]);
                radius += amp * (std::f64::consts::PI * (h + 1) as f64 * u + phase).sin();
            }
            (height * (u - 0.5), radius.clamp(0.05, 0.40))
        })
        .collect();
    TriangleMesh::lathe(&profile, 24)
}
