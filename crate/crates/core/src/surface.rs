//! Voxels from the level set of tri-linear Bezier volumes.

use crate::voxel::{interleave, Voxel};

/// An octree leaf block with its eight corner controls, indexed
/// `(i << 2) | (j << 1) | k` for the corner at offset `(i, j, k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BezierVolume {
    /// Cubic octree level.
    pub level: usize,
    pub block: Voxel,
    pub corners: [f64; 8],
}

impl BezierVolume {
    pub fn new(level: usize, block: Voxel, corners: [f64; 8]) -> Self {
        Self { level, block, corners }
    }

    /// Edge length in voxels at grid depth `depth`.
    pub fn side(&self, depth: u8) -> u64 {
        1u64 << (depth as usize - self.level)
    }

    /// Value at local coordinates in `[0, 1]^3`.
    pub fn eval(&self, u: f64, v: f64, w: f64) -> f64 {
        trilinear(&self.corners, u, v, w)
    }

    /// Value at a point given in voxel units of the whole grid.
    pub fn eval_global(&self, p: [f64; 3], depth: u8) -> f64 {
        let s = self.side(depth) as f64;
        let l = |a: usize| (p[a] - self.block[a] as f64 * s) / s;
        self.eval(l(0), l(1), l(2))
    }
}

pub fn trilinear(c: &[f64; 8], u: f64, v: f64, w: f64) -> f64 {
    let (iu, iv, iw) = (1.0 - u, 1.0 - v, 1.0 - w);
    let c00 = c[0] * iu + c[4] * u;
    let c01 = c[1] * iu + c[5] * u;
    let c10 = c[2] * iu + c[6] * u;
    let c11 = c[3] * iu + c[7] * u;
    let c0 = c00 * iv + c10 * v;
    let c1 = c01 * iv + c11 * v;
    c0 * iw + c1 * w
}

fn min_max(c: &[f64; 8]) -> (f64, f64) {
    c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// `min <= c <= max` over the corners.
pub fn has_c_crossing(corners: &[f64; 8], c: f64) -> bool {
    let (lo, hi) = min_max(corners);
    lo <= c && c <= hi
}

/// Every voxel of the block whose eight cell corners straddle `c`, found by
/// depth-first refinement. Output is in Morton order.
pub fn subdivide(bv: &BezierVolume, c: f64, depth: u8) -> Vec<Voxel> {
    let mut out = Vec::new();
    if bv.level > depth as usize {
        return out;
    }
    let steps = depth as usize - bv.level;
    let scale = bv.corners.iter().fold(c.abs(), |m, v| m.max(v.abs()));
    let slack = 1e-12 * scale.max(1e-300);
    recurse(bv, c, steps, 0, [0, 0, 0], slack, &mut out);
    out
}

fn recurse(bv: &BezierVolume, c: f64, steps: usize, k: usize, off: [u64; 3], slack: f64, out: &mut Vec<Voxel>) {
    let n = (1u64 << k) as f64;
    let mut vals = [0.0; 8];
    for (ci, v) in vals.iter_mut().enumerate() {
        let d = [(ci >> 2) as u64, ((ci >> 1) & 1) as u64, (ci & 1) as u64];
        *v = bv.eval((off[0] + d[0]) as f64 / n, (off[1] + d[1]) as f64 / n, (off[2] + d[2]) as f64 / n);
    }
    let (lo, hi) = min_max(&vals);
    if k == steps {
        if lo <= c && c <= hi {
            let s = 1u64 << steps;
            out.push([
                (bv.block[0] as u64 * s + off[0]) as u32,
                (bv.block[1] as u64 * s + off[1]) as u32,
                (bv.block[2] as u64 * s + off[2]) as u32,
            ]);
        }
        return;
    }
    // Rounding can put an interior value just outside the corner range, so
    // the pruning test is relaxed; the voxel test above is exact.
    if lo > c + slack || hi < c - slack {
        return;
    }
    for o in 0..8u64 {
        let child = [2 * off[0] + (o >> 2), 2 * off[1] + ((o >> 1) & 1), 2 * off[2] + (o & 1)];
        recurse(bv, c, steps, k + 1, child, slack, out);
    }
}

/// Gradient of the tri-linear volume (constant sums of corner differences)
/// and the axis of largest magnitude. `None` when the gradient vanishes.
pub fn dominant_axis(corners: &[f64; 8]) -> Option<(usize, [f64; 3])> {
    let mut g = [0.0; 3];
    for (ci, &v) in corners.iter().enumerate() {
        for (a, ga) in g.iter_mut().enumerate() {
            let bit = (ci >> (2 - a)) & 1;
            *ga += if bit == 1 { v } else { -v };
        }
    }
    let mut best = 0;
    for a in 1..3 {
        if g[a].abs() > g[best].abs() {
            best = a;
        }
    }
    if g[best] == 0.0 {
        None
    } else {
        Some((best, g))
    }
}

/// Crossing position along `axis` for the ray through transverse local
/// coordinates `(t1, t2)`; `None` for a ray parallel to the level set.
pub fn ray_crossing(corners: &[f64; 8], axis: usize, t1: f64, t2: f64, c: f64) -> Option<f64> {
    let (b1, b2) = transverse(axis);
    let at = |z: f64| {
        let mut p = [0.0; 3];
        p[axis] = z;
        p[b1] = t1;
        p[b2] = t2;
        trilinear(corners, p[0], p[1], p[2])
    };
    let f0 = at(0.0);
    let f1 = at(1.0);
    let den = f0 - f1;
    if den == 0.0 {
        None
    } else {
        Some((f0 - c) / den)
    }
}

fn transverse(axis: usize) -> (usize, usize) {
    match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

/// One ray per voxel column along the dominant axis, keeping crossings in
/// `[-range, 1 + range]` of the block. Degenerate blocks fall back to
/// [`subdivide`]. Output is Morton sorted and unique.
pub fn raycast(bv: &BezierVolume, c: f64, range: f64, depth: u8) -> Vec<Voxel> {
    let Some((axis, _)) = dominant_axis(&bv.corners) else {
        return subdivide(bv, c, depth);
    };
    let (b1, b2) = transverse(axis);
    let s = bv.side(depth);
    let grid = 1i64 << depth;
    let mut out = Vec::new();
    for i in 0..s {
        for j in 0..s {
            let t1 = (i as f64 + 0.5) / s as f64;
            let t2 = (j as f64 + 0.5) / s as f64;
            let Some(z) = ray_crossing(&bv.corners, axis, t1, t2, c) else { continue };
            if !(z >= -range && z <= 1.0 + range) {
                continue;
            }
            let mut kz = (z * s as f64).floor() as i64;
            if z <= 1.0 && kz == s as i64 {
                kz -= 1;
            }
            let mut v = [0i64; 3];
            v[axis] = bv.block[axis] as i64 * s as i64 + kz;
            v[b1] = bv.block[b1] as i64 * s as i64 + i as i64;
            v[b2] = bv.block[b2] as i64 * s as i64 + j as i64;
            if v.iter().all(|&x| (0..grid).contains(&x)) {
                out.push([v[0] as u32, v[1] as u32, v[2] as u32]);
            }
        }
    }
    out.sort_unstable_by_key(|&v| interleave(v));
    out.dedup();
    out
}

/// Exhaustive scan: every voxel of the block with a `c`-crossing among the
/// tri-linear values at its cell corners.
pub fn scan_crossings(bv: &BezierVolume, c: f64, depth: u8) -> Vec<Voxel> {
    let s = bv.side(depth);
    let n = s as f64;
    let mut out = Vec::new();
    for x in 0..s {
        for y in 0..s {
            for z in 0..s {
                let mut vals = [0.0; 8];
                for (ci, v) in vals.iter_mut().enumerate() {
                    let d = [(ci >> 2) as u64, ((ci >> 1) & 1) as u64, (ci & 1) as u64];
                    *v = bv.eval((x + d[0]) as f64 / n, (y + d[1]) as f64 / n, (z + d[2]) as f64 / n);
                }
                if has_c_crossing(&vals, c) {
                    out.push([
                        (bv.block[0] as u64 * s + x) as u32,
                        (bv.block[1] as u64 * s + y) as u32,
                        (bv.block[2] as u64 * s + z) as u32,
                    ]);
                }
            }
        }
    }
    out.sort_unstable_by_key(|&v| interleave(v));
    out
}
