//! Voxel grids, Morton ordering and the sparse voxel octree shared by the
//! geometry and attribute codecs.
//!
//! The octree is stored as a binary tree of depth `3d`: level `l` splits
//! along x, y, z in turn, so level `3l'` blocks are cubes of side `2^-l'` and
//! intermediate levels are cuboids. The cubic octree used for geometry is the
//! view at every third binary level.

use std::collections::HashMap;
use std::ops::Range;

use crate::error::{Error, Result};

/// Integer voxel coordinates in `[0, 2^d)^3`.
pub type Voxel = [u32; 3];

/// Largest depth accepted by [`morton_encode`].
pub const MAX_MORTON_DEPTH: u8 = 21;
/// Largest depth accepted for clouds and octrees (corner lattices need one
/// extra bit per axis).
pub const MAX_DEPTH: u8 = 20;

#[inline]
fn spread3(v: u32) -> u64 {
    let mut x = (v as u64) & 0x1f_ffff;
    x = (x | (x << 32)) & 0x001f_0000_0000_ffff;
    x = (x | (x << 16)) & 0x001f_0000_ff00_00ff;
    x = (x | (x << 8)) & 0x100f_00f0_0f00_f00f;
    x = (x | (x << 4)) & 0x10c3_0c30_c30c_30c3;
    x = (x | (x << 2)) & 0x1249_2492_4924_9249;
    x
}

#[inline]
fn compact3(code: u64) -> u32 {
    let mut x = code & 0x1249_2492_4924_9249;
    x = (x | (x >> 2)) & 0x10c3_0c30_c30c_30c3;
    x = (x | (x >> 4)) & 0x100f_00f0_0f00_f00f;
    x = (x | (x >> 8)) & 0x001f_0000_ff00_00ff;
    x = (x | (x >> 16)) & 0x001f_0000_0000_ffff;
    x = (x | (x >> 32)) & 0x1f_ffff;
    x as u32
}

/// Bit interleave with x as the most significant bit of every triple. No
/// range check; coordinates must fit in 21 bits.
#[inline]
pub fn interleave(pos: Voxel) -> u64 {
    (spread3(pos[0]) << 2) | (spread3(pos[1]) << 1) | spread3(pos[2])
}

/// Morton code of `pos` at depth `d`: bits `x1 y1 z1 ... xd yd zd` from the
/// most significant end of a `3d`-bit integer.
pub fn morton_encode(pos: Voxel, depth: u8) -> Result<u64> {
    if depth == 0 || depth > MAX_MORTON_DEPTH {
        return Err(Error::UnsupportedDepth(depth));
    }
    for &c in &pos {
        if (c as u64) >> depth != 0 {
            return Err(Error::CoordinateOutOfRange { value: c, depth });
        }
    }
    Ok(interleave(pos))
}

pub fn morton_decode(code: u64, _depth: u8) -> Voxel {
    [compact3(code >> 2), compact3(code >> 1), compact3(code)]
}

/// Axis-aligned cube used to map real coordinates onto the voxel grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingCube {
    pub origin: [f64; 3],
    pub size: f64,
}

impl BoundingCube {
    /// The grid itself: integer coordinates map to themselves.
    pub fn voxel_grid(depth: u8) -> Self {
        Self { origin: [0.0; 3], size: (1u64 << depth) as f64 }
    }

    /// Smallest cube with corner at the component-wise minimum enclosing all
    /// points. Degenerate input yields a unit cube.
    pub fn enclosing(points: &[[f64; 3]]) -> Option<Self> {
        let first = points.first()?;
        let mut lo = *first;
        let mut hi = *first;
        for p in points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let size = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
        Some(Self { origin: lo, size: if size > 0.0 { size } else { 1.0 } })
    }
}

/// Deduplicated voxels in strictly increasing Morton order, with optional
/// per-voxel attribute vectors and unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelCloud {
    depth: u8,
    positions: Vec<Voxel>,
    codes: Vec<u64>,
    attr_dim: usize,
    attributes: Vec<f64>,
    normals: Option<Vec<[f64; 3]>>,
}

impl VoxelCloud {
    /// Builds a cloud from already sorted, unique voxels. `attributes` is
    /// row-major with `attr_dim` values per voxel.
    pub fn new(
        depth: u8,
        positions: Vec<Voxel>,
        attr_dim: usize,
        attributes: Vec<f64>,
        normals: Option<Vec<[f64; 3]>>,
    ) -> Result<Self> {
        if depth == 0 || depth > MAX_DEPTH {
            return Err(Error::UnsupportedDepth(depth));
        }
        if attributes.len() != positions.len() * attr_dim {
            return Err(Error::LengthMismatch {
                expected: positions.len() * attr_dim,
                actual: attributes.len(),
            });
        }
        if let Some(n) = &normals {
            if n.len() != positions.len() {
                return Err(Error::LengthMismatch { expected: positions.len(), actual: n.len() });
            }
            for v in n {
                let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if (norm - 1.0).abs() > 1e-6 {
                    return Err(Error::InvalidCloud(format!("normal {v:?} is not unit length")));
                }
            }
        }
        let codes = positions
            .iter()
            .map(|&p| morton_encode(p, depth))
            .collect::<Result<Vec<_>>>()?;
        if codes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidCloud("positions not strictly increasing in Morton order".into()));
        }
        Ok(Self { depth, positions, codes, attr_dim, attributes, normals })
    }

    /// Sorts voxels into Morton order and merges duplicates. Attributes of
    /// merged voxels are averaged; normals are summed and renormalised.
    pub fn from_unsorted(
        depth: u8,
        positions: Vec<Voxel>,
        attr_dim: usize,
        attributes: Vec<f64>,
        normals: Option<Vec<[f64; 3]>>,
    ) -> Result<Self> {
        if depth == 0 || depth > MAX_DEPTH {
            return Err(Error::UnsupportedDepth(depth));
        }
        if positions.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if attributes.len() != positions.len() * attr_dim {
            return Err(Error::LengthMismatch {
                expected: positions.len() * attr_dim,
                actual: attributes.len(),
            });
        }
        let mut keyed = Vec::with_capacity(positions.len());
        for (i, &p) in positions.iter().enumerate() {
            keyed.push((morton_encode(p, depth)?, i));
        }
        keyed.sort_unstable();

        let mut out_pos = Vec::new();
        let mut out_attr = Vec::new();
        let mut out_normals = normals.as_ref().map(|_| Vec::new());
        let mut i = 0;
        while i < keyed.len() {
            let mut j = i;
            while j < keyed.len() && keyed[j].0 == keyed[i].0 {
                j += 1;
            }
            let count = (j - i) as f64;
            out_pos.push(positions[keyed[i].1]);
            for c in 0..attr_dim {
                let sum: f64 = keyed[i..j].iter().map(|&(_, k)| attributes[k * attr_dim + c]).sum();
                out_attr.push(sum / count);
            }
            if let (Some(src), Some(dst)) = (normals.as_ref(), out_normals.as_mut()) {
                let mut s = [0.0; 3];
                for &(_, k) in &keyed[i..j] {
                    for a in 0..3 {
                        s[a] += src[k][a];
                    }
                }
                let norm = (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt();
                if norm > 1e-12 {
                    dst.push([s[0] / norm, s[1] / norm, s[2] / norm]);
                } else {
                    dst.push(src[keyed[i].1]);
                }
            }
            i = j;
        }
        Self::new(depth, out_pos, attr_dim, out_attr, out_normals)
    }

    pub fn depth(&self) -> u8 {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Voxel] {
        &self.positions
    }

    pub fn codes(&self) -> &[u64] {
        &self.codes
    }

    pub fn attr_dim(&self) -> usize {
        self.attr_dim
    }

    pub fn attributes(&self) -> &[f64] {
        &self.attributes
    }

    pub fn attribute(&self, i: usize) -> &[f64] {
        &self.attributes[i * self.attr_dim..(i + 1) * self.attr_dim]
    }

    /// Values of one attribute channel over all voxels.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.attributes[i * self.attr_dim + c]).collect()
    }

    pub fn normals(&self) -> Option<&[[f64; 3]]> {
        self.normals.as_deref()
    }

    pub fn with_normals(mut self, normals: Vec<[f64; 3]>) -> Result<Self> {
        if normals.len() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), actual: normals.len() });
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn with_attributes(mut self, attr_dim: usize, attributes: Vec<f64>) -> Result<Self> {
        if attributes.len() != self.len() * attr_dim {
            return Err(Error::LengthMismatch { expected: self.len() * attr_dim, actual: attributes.len() });
        }
        self.attr_dim = attr_dim;
        self.attributes = attributes;
        Ok(self)
    }

    /// Same voxels without attributes or normals.
    pub fn geometry_only(&self) -> Self {
        Self {
            depth: self.depth,
            positions: self.positions.clone(),
            codes: self.codes.clone(),
            attr_dim: 0,
            attributes: Vec::new(),
            normals: None,
        }
    }

    /// Index of a voxel, if present.
    pub fn find(&self, pos: Voxel) -> Option<usize> {
        let code = morton_encode(pos, self.depth).ok()?;
        self.codes.binary_search(&code).ok()
    }
}

/// Scales `points` from `cube` onto the `2^d` grid, floors to integers and
/// merges duplicates (attribute mean). Points on the far faces of the cube
/// land in the last cell.
pub fn voxelize(
    points: &[[f64; 3]],
    attr_dim: usize,
    attributes: &[f64],
    depth: u8,
    cube: &BoundingCube,
) -> Result<VoxelCloud> {
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let positions = quantize_points(points, depth, cube)?;
    VoxelCloud::from_unsorted(depth, positions, attr_dim, attributes.to_vec(), None)
}

/// Grid cell of every point, without merging.
pub fn quantize_points(points: &[[f64; 3]], depth: u8, cube: &BoundingCube) -> Result<Vec<Voxel>> {
    if depth == 0 || depth > MAX_DEPTH {
        return Err(Error::UnsupportedDepth(depth));
    }
    let side = (1u64 << depth) as f64;
    let max = (1u32 << depth) - 1;
    let scale = side / cube.size;
    Ok(points
        .iter()
        .map(|p| {
            let mut v = [0u32; 3];
            for a in 0..3 {
                let t = ((p[a] - cube.origin[a]) * scale).floor();
                v[a] = if t <= 0.0 { 0 } else if t >= max as f64 { max } else { t as u32 };
            }
            v
        })
        .collect())
}

/// Bits of block index per axis at binary level `level`.
#[inline]
pub fn axis_bits(level: usize) -> [u32; 3] {
    let q = (level / 3) as u32;
    let r = level % 3;
    [q + (r >= 1) as u32, q + (r >= 2) as u32, q]
}

/// One level of the binary tree: occupied blocks in Morton order.
#[derive(Debug, Clone)]
struct BinaryLevel {
    prefixes: Vec<u64>,
    /// `len + 1` offsets into the voxel array.
    voxel_start: Vec<u32>,
    /// `len + 1` offsets into the next level's blocks (empty at the leaves).
    child_start: Vec<u32>,
    parent: Vec<u32>,
}

/// Occupied blocks at every level `0..=3d` of the binary Morton tree.
#[derive(Debug, Clone)]
pub struct OctreeLevels {
    depth: u8,
    levels: Vec<BinaryLevel>,
}

impl OctreeLevels {
    pub fn build(cloud: &VoxelCloud) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let depth = cloud.depth();
        let top = 3 * depth as usize;
        let n = cloud.len();
        let mut levels = Vec::with_capacity(top + 1);
        levels.push(BinaryLevel {
            prefixes: cloud.codes().to_vec(),
            voxel_start: (0..=n as u32).collect(),
            child_start: Vec::new(),
            parent: Vec::new(),
        });
        for _ in 0..top {
            let fine = levels.last_mut().unwrap();
            let mut prefixes = Vec::new();
            let mut voxel_start = Vec::new();
            let mut child_start = Vec::new();
            let mut parent = Vec::with_capacity(fine.prefixes.len());
            for (i, &p) in fine.prefixes.iter().enumerate() {
                let q = p >> 1;
                if prefixes.last() != Some(&q) {
                    prefixes.push(q);
                    voxel_start.push(fine.voxel_start[i]);
                    child_start.push(i as u32);
                }
                parent.push((prefixes.len() - 1) as u32);
            }
            voxel_start.push(n as u32);
            child_start.push(fine.prefixes.len() as u32);
            fine.parent = parent;
            levels.push(BinaryLevel { prefixes, voxel_start, child_start, parent: Vec::new() });
        }
        levels.reverse();
        Ok(Self { depth, levels })
    }

    pub fn depth(&self) -> u8 {
        self.depth
    }

    /// Finest binary level, `3d`.
    pub fn max_level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn num_voxels(&self) -> usize {
        *self.levels[0].voxel_start.last().unwrap() as usize
    }

    pub fn num_blocks(&self, level: usize) -> usize {
        self.levels[level].prefixes.len()
    }

    /// Morton prefix (length `level` bits) of a block.
    pub fn prefix(&self, level: usize, block: usize) -> u64 {
        self.levels[level].prefixes[block]
    }

    pub fn prefixes(&self, level: usize) -> &[u64] {
        &self.levels[level].prefixes
    }

    pub fn voxel_range(&self, level: usize, block: usize) -> Range<usize> {
        let s = &self.levels[level].voxel_start;
        s[block] as usize..s[block + 1] as usize
    }

    /// Number of voxels inside a block.
    pub fn weight(&self, level: usize, block: usize) -> u64 {
        let r = self.voxel_range(level, block);
        (r.end - r.start) as u64
    }

    /// Child block indices at `level + 1`.
    pub fn children(&self, level: usize, block: usize) -> Range<usize> {
        let s = &self.levels[level].child_start;
        s[block] as usize..s[block + 1] as usize
    }

    /// Parent block index at `level - 1`.
    pub fn parent(&self, level: usize, block: usize) -> usize {
        self.levels[level].parent[block] as usize
    }

    /// Integer shift of a block at its level's (possibly anisotropic)
    /// resolution.
    pub fn block_shift(&self, level: usize, block: usize) -> [u32; 3] {
        let top = self.max_level();
        let code = self.levels[level].prefixes[block] << (top - level);
        let v = morton_decode(code, self.depth);
        let bits = axis_bits(level);
        let d = self.depth as u32;
        [v[0] >> (d - bits[0]), v[1] >> (d - bits[1]), v[2] >> (d - bits[2])]
    }

    /// Binary level of cubic octree level `l`.
    pub fn cubic(l: usize) -> usize {
        3 * l
    }

    /// Occupied cube blocks at cubic level `l`.
    pub fn num_cubes(&self, l: usize) -> usize {
        self.num_blocks(3 * l)
    }

    /// Cube shift at cubic level `l`.
    pub fn cube_shift(&self, l: usize, block: usize) -> [u32; 3] {
        self.block_shift(3 * l, block)
    }

    /// Children of a cube at cubic level `l` as `(octant, block index at l+1)`,
    /// octant bits `(x << 2) | (y << 1) | z`.
    pub fn cube_children(&self, l: usize, block: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let b = 3 * l;
        let r1 = self.children(b, block);
        let r2 = self.levels[b + 1].child_start[r1.start] as usize..self.levels[b + 1].child_start[r1.end] as usize;
        let r3 = self.levels[b + 2].child_start[r2.start] as usize..self.levels[b + 2].child_start[r2.end] as usize;
        let prefixes = &self.levels[b + 3].prefixes;
        r3.map(move |c| ((prefixes[c] & 7) as usize, c))
    }

    /// Parent cube of a cube at cubic level `l > 0`.
    pub fn cube_parent(&self, l: usize, block: usize) -> usize {
        let b = 3 * l;
        let p1 = self.parent(b, block);
        let p2 = self.parent(b - 1, p1);
        self.parent(b - 2, p2)
    }

    /// Locates the block at `level` containing `voxel`.
    pub fn find_block(&self, level: usize, voxel: Voxel) -> Option<usize> {
        let code = morton_encode(voxel, self.depth).ok()? >> (self.max_level() - level);
        self.levels[level].prefixes.binary_search(&code).ok()
    }
}

/// Unique corners of the occupied blocks at one binary level.
#[derive(Debug, Clone)]
pub struct CornerSet {
    pub level: usize,
    /// Corner shifts in Morton order of their integer lattice coordinates.
    pub corners: Vec<[u32; 3]>,
    /// For each block, indices of its 8 corners ordered `(i << 2) | (j << 1) | k`.
    pub block_corners: Vec<[u32; 8]>,
}

impl CornerSet {
    pub fn len(&self) -> usize {
        self.corners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corners.is_empty()
    }

    /// Blocks incident to each corner.
    pub fn corner_blocks(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.corners.len()];
        for (b, cs) in self.block_corners.iter().enumerate() {
            for &c in cs {
                out[c as usize].push(b as u32);
            }
        }
        out
    }

    pub fn index_of(&self, corner: [u32; 3]) -> Option<usize> {
        let key = interleave(corner);
        self.corners.binary_search_by_key(&key, |&c| interleave(c)).ok()
    }

    pub fn index_map(&self) -> HashMap<[u32; 3], u32> {
        self.corners.iter().enumerate().map(|(i, &c)| (c, i as u32)).collect()
    }
}

/// Corner offset for corner index `c` in `(i << 2) | (j << 1) | k` order.
#[inline]
pub fn corner_offset(c: usize) -> [u32; 3] {
    [((c >> 2) & 1) as u32, ((c >> 1) & 1) as u32, (c & 1) as u32]
}

pub fn unique_corners(octree: &OctreeLevels, level: usize) -> Result<CornerSet> {
    if level > octree.max_level() {
        return Err(Error::LevelOutOfRange { level, max: octree.max_level() });
    }
    let nb = octree.num_blocks(level);
    let mut all: Vec<(u64, [u32; 3])> = Vec::with_capacity(nb * 8);
    let shifts: Vec<[u32; 3]> = (0..nb).map(|b| octree.block_shift(level, b)).collect();
    for s in &shifts {
        for c in 0..8 {
            let o = corner_offset(c);
            let p = [s[0] + o[0], s[1] + o[1], s[2] + o[2]];
            all.push((interleave(p), p));
        }
    }
    all.sort_unstable_by_key(|e| e.0);
    all.dedup_by_key(|e| e.0);
    let keys: Vec<u64> = all.iter().map(|e| e.0).collect();
    let corners: Vec<[u32; 3]> = all.into_iter().map(|e| e.1).collect();
    let block_corners = shifts
        .iter()
        .map(|s| {
            let mut idx = [0u32; 8];
            for (c, slot) in idx.iter_mut().enumerate() {
                let o = corner_offset(c);
                let key = interleave([s[0] + o[0], s[1] + o[1], s[2] + o[2]]);
                *slot = keys.binary_search(&key).expect("corner present") as u32;
            }
            idx
        })
        .collect();
    Ok(CornerSet { level, corners, block_corners })
}
