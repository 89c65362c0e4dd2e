//! Cubic octree with leaf flags, and its occupancy-code serialisation.

use std::collections::HashSet;
use std::ops::Range;

use crate::entropy::bits::{BitReader, BitWriter};
use crate::error::{Error, Result};
use crate::voxel::{interleave, Voxel, VoxelCloud};

/// Surviving blocks per cubic level `0..=d`, each level in Morton order.
/// Leaves at level `d` are voxels; shallower leaves are Bezier volumes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrunedOctree {
    depth: u8,
    blocks: Vec<Vec<Voxel>>,
    leaf: Vec<Vec<bool>>,
    /// `child_start[l][i]..child_start[l][i + 1]` indexes level `l + 1`.
    child_start: Vec<Vec<usize>>,
}

impl PrunedOctree {
    /// Unpruned tree: every occupied block, leaves at voxel level only.
    pub fn full(cloud: &VoxelCloud) -> Self {
        let d = cloud.depth();
        let mut blocks = vec![Vec::new(); d as usize + 1];
        for (l, level) in blocks.iter_mut().enumerate() {
            let shift = d as usize - l;
            for p in cloud.positions() {
                let b = [p[0] >> shift, p[1] >> shift, p[2] >> shift];
                if level.last() != Some(&b) {
                    level.push(b);
                }
            }
        }
        let leaf = blocks.iter().enumerate().map(|(l, b)| vec![l == d as usize; b.len()]).collect();
        Self::assemble(d, blocks, leaf)
    }

    fn assemble(depth: u8, blocks: Vec<Vec<Voxel>>, leaf: Vec<Vec<bool>>) -> Self {
        let mut child_start = Vec::with_capacity(depth as usize);
        for l in 0..depth as usize {
            let mut starts = Vec::with_capacity(blocks[l].len() + 1);
            let next = &blocks[l + 1];
            let mut j = 0;
            for (i, b) in blocks[l].iter().enumerate() {
                starts.push(j);
                if !leaf[l][i] {
                    while j < next.len() && next[j].map(|c| c >> 1) == *b {
                        j += 1;
                    }
                }
            }
            starts.push(j);
            child_start.push(starts);
        }
        Self { depth, blocks, leaf, child_start }
    }

    pub fn depth(&self) -> u8 {
        self.depth
    }

    pub fn blocks(&self, level: usize) -> &[Voxel] {
        &self.blocks[level]
    }

    pub fn is_leaf(&self, level: usize, i: usize) -> bool {
        self.leaf[level][i]
    }

    pub fn children(&self, level: usize, i: usize) -> Range<usize> {
        if level >= self.depth as usize {
            return 0..0;
        }
        self.child_start[level][i]..self.child_start[level][i + 1]
    }

    pub fn find(&self, level: usize, block: Voxel) -> Option<usize> {
        let key = interleave(block);
        self.blocks[level].binary_search_by_key(&key, |&b| interleave(b)).ok()
    }

    /// `(level, block)` of every leaf, coarse levels first.
    pub fn leaves(&self) -> impl Iterator<Item = (usize, Voxel)> + '_ {
        self.blocks.iter().enumerate().flat_map(move |(l, bs)| {
            bs.iter().enumerate().filter(move |&(i, _)| self.leaf[l][i]).map(move |(_, &b)| (l, b))
        })
    }

    pub fn num_leaves(&self) -> usize {
        self.leaf.iter().flatten().filter(|&&f| f).count()
    }

    /// Leaves shallower than the voxel level.
    pub fn bezier_leaves(&self) -> impl Iterator<Item = (usize, Voxel)> + '_ {
        let d = self.depth as usize;
        self.leaves().filter(move |&(l, _)| l < d)
    }

    /// Counts of leaves per level.
    pub fn leaf_histogram(&self) -> Vec<usize> {
        self.leaf.iter().map(|f| f.iter().filter(|&&x| x).count()).collect()
    }

    /// Keeps the blocks of `self` reachable without passing through a leaf
    /// chosen by `is_leaf`. Voxel-level blocks are always leaves.
    pub fn prune(&self, mut is_leaf: impl FnMut(usize, usize) -> bool) -> Self {
        let d = self.depth as usize;
        let mut blocks = vec![Vec::new(); d + 1];
        let mut leaf = vec![Vec::new(); d + 1];
        let mut alive: Vec<usize> = (0..self.blocks[0].len()).collect();
        for l in 0..=d {
            let mut next = Vec::new();
            for &i in &alive {
                let lf = l == d || self.leaf[l][i] || is_leaf(l, i);
                blocks[l].push(self.blocks[l][i]);
                leaf[l].push(lf);
                if !lf {
                    next.extend(self.children(l, i));
                }
            }
            alive = next;
        }
        Self::assemble(self.depth, blocks, leaf)
    }

    /// Every leaf at `level` (clamped to the tree), i.e. fixed-level pruning.
    pub fn prune_fixed(&self, level: usize) -> Self {
        self.prune(|l, _| l >= level)
    }

    /// Set of Bezier-volume leaves keyed by `(level, Morton key)`.
    pub fn bezier_leaf_set(&self) -> HashSet<(usize, u64)> {
        self.bezier_leaves().map(|(l, b)| (l, interleave(b))).collect()
    }

    /// One byte per internal block, level by level, bit `o` set when child
    /// octant `o` is present.
    pub fn occupancy_codes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for l in 0..self.depth as usize {
            for (i, b) in self.blocks[l].iter().enumerate() {
                if self.leaf[l][i] {
                    continue;
                }
                let mut byte = 0u8;
                for c in self.children(l, i) {
                    let ch = self.blocks[l + 1][c];
                    let o = ((ch[0] - 2 * b[0]) << 2) | ((ch[1] - 2 * b[1]) << 1) | (ch[2] - 2 * b[2]);
                    byte |= 1 << o;
                }
                out.push(byte);
            }
        }
        out
    }

    /// Leaf flags for levels `start..d`, packed MSB first.
    pub fn leaf_flags(&self, start: usize) -> (Vec<u8>, usize) {
        let mut w = BitWriter::new();
        let mut n = 0;
        for l in start..self.depth as usize {
            for &f in &self.leaf[l] {
                w.put_bit(f);
                n += 1;
            }
        }
        (w.finish(), n)
    }

    /// Inverse of [`occupancy_codes`](Self::occupancy_codes) and
    /// [`leaf_flags`](Self::leaf_flags).
    pub fn from_codes(depth: u8, start: usize, occupancy: &[u8], flags: &[u8]) -> Result<Self> {
        let d = depth as usize;
        if start > d {
            return Err(Error::Corrupt(format!("start level {start} beyond depth {d}")));
        }
        let mut bits = BitReader::new(flags);
        let mut occ = occupancy.iter();
        let mut blocks = vec![vec![[0u32; 3]]];
        let mut leaf = Vec::new();
        for l in 0..=d {
            let mut flags_l = Vec::with_capacity(blocks[l].len());
            let mut next = Vec::new();
            for &b in &blocks[l] {
                let lf = if l == d {
                    true
                } else if l >= start {
                    bits.get_bit().map_err(|_| Error::Truncated("leaf flags"))?
                } else {
                    false
                };
                flags_l.push(lf);
                if !lf {
                    let byte = *occ.next().ok_or(Error::Truncated("occupancy codes"))?;
                    if byte == 0 {
                        return Err(Error::Corrupt("empty occupancy code".into()));
                    }
                    for o in 0..8u32 {
                        if byte & (1 << o) != 0 {
                            next.push([2 * b[0] + (o >> 2), 2 * b[1] + ((o >> 1) & 1), 2 * b[2] + (o & 1)]);
                        }
                    }
                }
            }
            leaf.push(flags_l);
            if l < d {
                blocks.push(next);
            }
        }
        if occ.next().is_some() {
            return Err(Error::Corrupt("trailing occupancy codes".into()));
        }
        Ok(Self::assemble(depth, blocks, leaf))
    }

    /// Voxel-level leaves.
    pub fn voxels(&self) -> &[Voxel] {
        &self.blocks[self.depth as usize]
    }
}
