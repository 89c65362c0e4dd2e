//! Synthetic voxelised surfaces with analytic normals and colours.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::voxel::{Voxel, VoxelCloud};

pub const MAX_SYNTH_DEPTH: u8 = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Sphere,
    Plane,
    Torus,
}

impl FromStr for Shape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sphere" => Ok(Self::Sphere),
            "plane" => Ok(Self::Plane),
            "torus" => Ok(Self::Torus),
            _ => Err(Error::InvalidParameter(format!("unknown shape `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorField {
    SmoothGradient,
    Checker,
}

impl FromStr for ColorField {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth-gradient" | "smooth" => Ok(Self::SmoothGradient),
            "checker" => Ok(Self::Checker),
            _ => Err(Error::InvalidParameter(format!("unknown colour field `{s}`"))),
        }
    }
}

/// Exact signed distance of a shape in voxel units, with its centre
/// jittered by the seed.
#[derive(Debug, Clone, Copy)]
struct Surface {
    shape: Shape,
    center: [f64; 3],
    side: f64,
}

impl Surface {
    fn sdf(&self, p: [f64; 3]) -> f64 {
        let q = [p[0] - self.center[0], p[1] - self.center[1], p[2] - self.center[2]];
        match self.shape {
            Shape::Sphere => norm(q) - 0.4 * self.side,
            Shape::Plane => q[2],
            Shape::Torus => {
                let rxy = (q[0] * q[0] + q[1] * q[1]).sqrt() - 0.3 * self.side;
                (rxy * rxy + q[2] * q[2]).sqrt() - 0.12 * self.side
            }
        }
    }

    fn normal(&self, p: [f64; 3]) -> [f64; 3] {
        let q = [p[0] - self.center[0], p[1] - self.center[1], p[2] - self.center[2]];
        let g = match self.shape {
            Shape::Sphere => q,
            Shape::Plane => [0.0, 0.0, 1.0],
            Shape::Torus => {
                let rho = (q[0] * q[0] + q[1] * q[1]).sqrt().max(1e-12);
                let s = 1.0 - 0.3 * self.side / rho;
                [q[0] * s, q[1] * s, q[2]]
            }
        };
        let n = norm(g);
        if n < 1e-12 {
            [0.0, 0.0, 1.0]
        } else {
            [g[0] / n, g[1] / n, g[2] / n]
        }
    }
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn color(field: ColorField, p: [f64; 3], side: f64) -> [f64; 3] {
    let t = [p[0] / side, p[1] / side, p[2] / side];
    let tau = std::f64::consts::TAU;
    let c = match field {
        ColorField::SmoothGradient => [
            128.0 + 100.0 * (tau * t[0] + 0.5).sin() * (tau * t[1]).cos(),
            128.0 + 100.0 * (tau * (t[1] + t[2])).sin(),
            128.0 + 60.0 * (tau * t[2]).cos() + 40.0 * (tau * t[0]).sin(),
        ],
        ColorField::Checker => {
            let cell = |x: f64| (x * 8.0).floor() as i64;
            if (cell(t[0]) + cell(t[1]) + cell(t[2])).rem_euclid(2) == 0 {
                [230.0, 200.0, 40.0]
            } else {
                [25.0, 60.0, 210.0]
            }
        }
    };
    c.map(|v: f64| v.round().clamp(0.0, 255.0))
}

/// Voxels whose cell corners straddle the zero set, with the analytic normal
/// at the voxel centre and an RGB colour.
pub fn synth_cloud(shape: Shape, depth: u8, field: ColorField, seed: u64) -> Result<VoxelCloud> {
    if depth == 0 || depth > MAX_SYNTH_DEPTH {
        return Err(Error::UnsupportedDepth(depth));
    }
    let side = (1u64 << depth) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = |rng: &mut ChaCha8Rng| rng.gen_range(-0.25..0.25);
    let center = [side / 2.0 + jitter(&mut rng), side / 2.0 + jitter(&mut rng), side / 2.0 + 0.1 + jitter(&mut rng)];
    let surf = Surface { shape, center, side };

    let mut positions = Vec::new();
    collect(&surf, depth, 0, [0, 0, 0], &mut positions);
    let mut normals = Vec::with_capacity(positions.len());
    let mut attrs = Vec::with_capacity(positions.len() * 3);
    for v in &positions {
        let c = [v[0] as f64 + 0.5, v[1] as f64 + 0.5, v[2] as f64 + 0.5];
        normals.push(surf.normal(c));
        attrs.extend(color(field, c, side));
    }
    VoxelCloud::new(depth, positions, 3, attrs, Some(normals))
}

/// Depth-first in octant order, so the output is Morton sorted.
fn collect(surf: &Surface, depth: u8, level: u8, block: Voxel, out: &mut Vec<Voxel>) {
    let s = (1u64 << (depth - level)) as f64;
    let lo = [block[0] as f64 * s, block[1] as f64 * s, block[2] as f64 * s];
    if level == depth {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for c in 0..8 {
            let p = [lo[0] + (c >> 2) as f64, lo[1] + ((c >> 1) & 1) as f64, lo[2] + (c & 1) as f64];
            let f = surf.sdf(p);
            min = min.min(f);
            max = max.max(f);
        }
        if min <= 0.0 && max >= 0.0 {
            out.push(block);
        }
        return;
    }
    let mid = [lo[0] + s / 2.0, lo[1] + s / 2.0, lo[2] + s / 2.0];
    if surf.sdf(mid).abs() > s * 3f64.sqrt() / 2.0 + 1e-9 {
        return;
    }
    for o in 0..8u32 {
        let child = [2 * block[0] + (o >> 2), 2 * block[1] + ((o >> 1) & 1), 2 * block[2] + (o & 1)];
        collect(surf, depth, level + 1, child, out);
    }
}
