//! Signed distances sampled on octree corners, and tri-linear prediction of
//! child corners from their parent block.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::voxel::{interleave, Voxel, VoxelCloud};

/// Corners within this distance (voxel units) of their nearest voxel are
/// near the surface; their value averages the tangent-plane distances of all
/// candidates within the same radius.
pub const NEAR_SURFACE: f64 = 1.5;

/// Signed distance from `corner` (voxel units) to the voxel centres in
/// `candidates`. Far from the surface: the Euclidean distance to the nearest
/// centre, positive when the offset from that voxel to the corner agrees with
/// its normal (ties go to the earliest candidate). Near the surface: the mean
/// of `(corner - x_i) . n_i` over the candidates within [`NEAR_SURFACE`].
pub fn signed_distance(corner: [f64; 3], candidates: impl IntoIterator<Item = ([f64; 3], [f64; 3])>) -> Option<f64> {
    let mut near = (0.0, 0usize);
    let mut best: Option<(f64, f64)> = None;
    for (x, n) in candidates {
        let d = [corner[0] - x[0], corner[1] - x[1], corner[2] - x[2]];
        let d2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        let proj = d[0] * n[0] + d[1] * n[1] + d[2] * n[2];
        if d2 <= NEAR_SURFACE * NEAR_SURFACE {
            near.0 += proj;
            near.1 += 1;
        }
        if best.is_none_or(|(b, _)| d2 < b) {
            best = Some((d2, proj));
        }
    }
    best.map(|(d2, proj)| {
        let dist = d2.sqrt();
        if dist <= NEAR_SURFACE {
            near.0 / near.1 as f64
        } else if proj < 0.0 {
            -dist
        } else {
            dist
        }
    })
}

/// Voxel centre in grid units.
#[inline]
pub fn voxel_center(v: Voxel) -> [f64; 3] {
    [v[0] as f64 + 0.5, v[1] as f64 + 0.5, v[2] as f64 + 0.5]
}

/// SDF of one lattice corner at cubic `level`, searching only the voxels of
/// the occupied level-`level` blocks that share the corner.
pub fn corner_sdf(cloud: &VoxelCloud, level: usize, corner: Voxel) -> Result<f64> {
    let d = cloud.depth() as usize;
    let normals = cloud
        .normals()
        .ok_or_else(|| Error::InvalidParameter("signed distances need normals".into()))?;
    let codes = cloud.codes();
    let span = 3 * (d - level);
    let s = (1u64 << (d - level)) as f64;
    let p = [corner[0] as f64 * s, corner[1] as f64 * s, corner[2] as f64 * s];
    let side = 1u64 << level;
    let mut ranges = Vec::with_capacity(8);
    for o in 0..8u32 {
        let delta = [o >> 2, (o >> 1) & 1, o & 1];
        if (0..3).any(|a| corner[a] < delta[a] || (corner[a] - delta[a]) as u64 >= side) {
            continue;
        }
        let b = [corner[0] - delta[0], corner[1] - delta[1], corner[2] - delta[2]];
        let lo = interleave(b) << span;
        let hi = (interleave(b) + 1) << span;
        let a = codes.partition_point(|&c| c < lo);
        let z = codes.partition_point(|&c| c < hi);
        if a < z {
            ranges.push(a..z);
        }
    }
    ranges.sort_by_key(|r| r.start);
    let pos = cloud.positions();
    signed_distance(p, ranges.into_iter().flatten().map(|i| (voxel_center(pos[i]), normals[i])))
        .ok_or_else(|| Error::InvalidParameter(format!("corner {corner:?} at level {level} touches no occupied block")))
}

/// Lattice corners of the given blocks, unique and Morton sorted.
pub fn block_corners<'a>(blocks: impl IntoIterator<Item = &'a Voxel>) -> Vec<Voxel> {
    let mut out: Vec<Voxel> = Vec::new();
    for b in blocks {
        for o in 0..8u32 {
            out.push([b[0] + (o >> 2), b[1] + ((o >> 1) & 1), b[2] + (o & 1)]);
        }
    }
    out.sort_unstable_by_key(|&c| interleave(c));
    out.dedup();
    out
}

/// Corner values keyed by lattice Morton key, one map per cubic level.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CornerField {
    pub levels: Vec<HashMap<u64, f64>>,
}

impl CornerField {
    pub fn new(depth: u8) -> Self {
        Self { levels: vec![HashMap::new(); depth as usize + 1] }
    }

    pub fn get(&self, level: usize, corner: Voxel) -> Option<f64> {
        self.levels.get(level)?.get(&interleave(corner)).copied()
    }

    pub fn insert(&mut self, level: usize, corner: Voxel, v: f64) {
        self.levels[level].insert(interleave(corner), v);
    }

    /// The eight corner values of a block, if all present.
    pub fn block(&self, level: usize, b: Voxel) -> Option<[f64; 8]> {
        let mut out = [0.0; 8];
        for (o, v) in out.iter_mut().enumerate() {
            let o = o as u32;
            *v = self.get(level, [b[0] + (o >> 2), b[1] + ((o >> 1) & 1), b[2] + (o & 1)])?;
        }
        Some(out)
    }
}

/// SDF on every corner of every occupied block at levels `levels`.
pub fn compute_sdf(cloud: &VoxelCloud, levels: std::ops::RangeInclusive<usize>) -> Result<CornerField> {
    let d = cloud.depth() as usize;
    if *levels.end() > d {
        return Err(Error::LevelOutOfRange { level: *levels.end(), max: d });
    }
    let mut field = CornerField::new(cloud.depth());
    for l in levels {
        let shift = d - l;
        let mut blocks: Vec<Voxel> = Vec::new();
        for p in cloud.positions() {
            let b = [p[0] >> shift, p[1] >> shift, p[2] >> shift];
            if blocks.last() != Some(&b) {
                blocks.push(b);
            }
        }
        for c in block_corners(&blocks) {
            field.insert(l, c, corner_sdf(cloud, l, c)?);
        }
    }
    Ok(field)
}

/// Midpoint role of a child corner inside its parent block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChildRole {
    Edge,
    Face,
    Center,
}

impl ChildRole {
    /// Role of a lattice corner at a child level; `None` when it is also a
    /// parent corner.
    pub fn of(corner: Voxel) -> Option<Self> {
        match corner.iter().filter(|&&c| c & 1 == 1).count() {
            0 => None,
            1 => Some(Self::Edge),
            2 => Some(Self::Face),
            _ => Some(Self::Center),
        }
    }

    pub fn parents(self) -> usize {
        match self {
            Self::Edge => 2,
            Self::Face => 4,
            Self::Center => 8,
        }
    }
}

/// Tri-linear prediction at a child-level corner: the mean of the 2, 4 or 8
/// parent-lattice corners around it. `parent(c)` returns parent-level
/// values.
pub fn predict_child(corner: Voxel, mut parent: impl FnMut(Voxel) -> Option<f64>) -> Result<f64> {
    let role = ChildRole::of(corner)
        .ok_or_else(|| Error::InvalidParameter(format!("corner {corner:?} is not a midpoint")))?;
    let mut sum = 0.0;
    for o in 0..8u32 {
        let delta = [o >> 2, (o >> 1) & 1, o & 1];
        // Even axes have a single parent coordinate.
        if (0..3).any(|a| corner[a] & 1 == 0 && delta[a] == 1) {
            continue;
        }
        let p = [(corner[0] >> 1) + delta[0], (corner[1] >> 1) + delta[1], (corner[2] >> 1) + delta[2]];
        sum += parent(p).ok_or_else(|| Error::Corrupt(format!("parent corner {p:?} missing")))?;
    }
    Ok(sum / role.parents() as f64)
}

/// Prediction from the eight corners of one parent block, for a child
/// corner given in offsets `0..=2` within that block.
pub fn predict_in_block(parent: &[f64; 8], offset: [u32; 3]) -> Result<f64> {
    if offset.iter().any(|&o| o > 2) {
        return Err(Error::InvalidParameter(format!("offset {offset:?} outside the block")));
    }
    predict_child(offset, |p| Some(parent[((p[0] << 2) | (p[1] << 1) | p[2]) as usize]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prediction_examples() {
        let v = [2.5; 8];
        for off in [[1, 0, 0], [1, 1, 0], [1, 1, 1], [0, 2, 1]] {
            assert_eq!(predict_in_block(&v, off).unwrap(), 2.5);
        }
        // Edge between corner 1 (0,0,1) and corner 3 (0,1,1).
        let mut c = [0.0; 8];
        c[1] = 1.0;
        c[3] = 3.0;
        assert_eq!(predict_in_block(&c, [0, 1, 2]).unwrap(), 2.0);
        let c = [0.0, 0.0, 0.0, 0.0, 8.0, 8.0, 8.0, 8.0];
        assert_eq!(predict_in_block(&c, [1, 1, 1]).unwrap(), 4.0);
        assert!(predict_in_block(&c, [2, 0, 2]).is_err());
    }

    #[test]
    fn prediction_is_trilinear() {
        let c = [0.3, -1.0, 2.0, 0.7, 1.1, -0.4, 0.0, 5.0];
        for x in 0..=2u32 {
            for y in 0..=2u32 {
                for z in 0..=2u32 {
                    if ChildRole::of([x, y, z]).is_none() {
                        continue;
                    }
                    let want = crate::surface::trilinear(&c, x as f64 / 2.0, y as f64 / 2.0, z as f64 / 2.0);
                    assert!((predict_in_block(&c, [x, y, z]).unwrap() - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sdf_sign_and_zero() {
        let n = [0.0, 0.0, 1.0];
        let x = [1.0, 1.0, 1.0];
        assert_eq!(signed_distance([1.0, 1.0, 1.0], [(x, n)]), Some(0.0));
        assert_eq!(signed_distance([1.0, 1.0, 3.0], [(x, n)]), Some(2.0));
        assert_eq!(signed_distance([1.0, 1.0, -2.0], [(x, n)]), Some(-3.0));
    }

    #[test]
    fn corner_search_is_local() {
        // Voxels at (0,0,0) and (3,3,3) at depth 2; level-1 corner (1,1,1)
        // touches both blocks, corner (0,0,0) only the first.
        let c = VoxelCloud::new(2, vec![[0, 0, 0], [3, 3, 3]], 0, vec![], Some(vec![[0.0, 0.0, 1.0]; 2])).unwrap();
        let f = corner_sdf(&c, 1, [0, 0, 0]).unwrap();
        assert!((f + 0.5).abs() < 1e-12);
        let g = corner_sdf(&c, 1, [2, 2, 2]).unwrap();
        assert!((g - 0.5).abs() < 1e-12);
        assert!(corner_sdf(&c, 1, [0, 2, 2]).is_err());
        let field = compute_sdf(&c, 0..=2).unwrap();
        assert_eq!(field.levels[1].len(), 15);
        assert_eq!(field.levels[2].len(), 16);
    }
}
