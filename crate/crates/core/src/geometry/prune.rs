//! Variable-level pruning rules for the geometry octree.

use std::collections::HashMap;
use std::str::FromStr;

use crate::entropy::Quantizer;
use crate::error::{Error, Result};
use crate::geometry::inloop::{CodingPlan, CornerRole, InLoopResult};
use crate::geometry::sdf::{predict_child, ChildRole, CornerField};
use crate::geometry::tree::PrunedOctree;
use crate::spatial::{to_i64, GridIndex};
use crate::surface::{subdivide, trilinear, BezierVolume};
use crate::voxel::{corner_offset, interleave, Voxel, VoxelCloud};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pruning {
    /// Every leaf at one level.
    Fixed(usize),
    /// Leaf when all descendant residuals satisfy `|q| <= t`.
    ZeroWavelets(u64),
    /// Leaf when the block-local one-way error is at most `e`.
    Distortion(f64),
    /// Rate-distortion optimal with rate weight `lambda`.
    RateDistortion(f64),
}

impl FromStr for Pruning {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidParameter(format!("pruning `{s}`: expected kind:value")))?;
        let bad = || Error::InvalidParameter(format!("pruning `{s}`: bad value `{arg}`"));
        let real = || -> Result<f64> {
            let v: f64 = arg.parse().map_err(|_| bad())?;
            if v.is_finite() && v >= 0.0 {
                Ok(v)
            } else {
                Err(bad())
            }
        };
        Ok(match kind {
            "fixed" => Self::Fixed(arg.parse().map_err(|_| bad())?),
            "zero" => Self::ZeroWavelets(arg.parse().map_err(|_| bad())?),
            "dist" => Self::Distortion(real()?),
            "rd" => Self::RateDistortion(real()?),
            _ => return Err(Error::InvalidParameter(format!("unknown pruning kind `{kind}`"))),
        })
    }
}

impl std::fmt::Display for Pruning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Fixed(l) => write!(f, "fixed:{l}"),
            Self::ZeroWavelets(t) => write!(f, "zero:{t}"),
            Self::Distortion(e) => write!(f, "dist:{e}"),
            Self::RateDistortion(l) => write!(f, "rd:{l}"),
        }
    }
}

/// Residual symbols of an exhaustive in-loop pass, looked up by corner.
#[derive(Debug, Clone)]
pub struct ResidualTable {
    start: usize,
    levels: Vec<HashMap<u64, i64>>,
}

impl ResidualTable {
    pub fn new(plan: &CodingPlan, result: &InLoopResult) -> Self {
        let levels = plan
            .levels
            .iter()
            .zip(&result.symbols)
            .map(|(lp, syms)| {
                let mut it = syms.iter();
                let mut m = HashMap::new();
                for (&c, &r) in lp.corners.iter().zip(&lp.roles) {
                    if matches!(r, CornerRole::Start | CornerRole::Coded) {
                        m.insert(interleave(c), *it.next().unwrap());
                    }
                }
                m
            })
            .collect();
        Self { start: plan.start, levels }
    }

    /// Symbol of a midpoint corner at `level`, if one was coded.
    pub fn get(&self, level: usize, corner: Voxel) -> Option<i64> {
        self.levels.get(level.checked_sub(self.start)?)?.get(&interleave(corner)).copied()
    }

    /// Symbols at `level` (coded midpoints only; the start level has none).
    pub fn level_symbols(&self, level: usize) -> Vec<i64> {
        if level <= self.start {
            return Vec::new();
        }
        self.levels.get(level - self.start).map(|m| m.values().copied().collect()).unwrap_or_default()
    }
}

/// Midpoint corners of the children of block `i` at `level`, unique.
fn child_midpoints(tree: &PrunedOctree, level: usize, i: usize) -> Vec<Voxel> {
    let mut out: Vec<Voxel> = Vec::new();
    for c in tree.children(level, i) {
        let b = tree.blocks(level + 1)[c];
        for o in 0..8u32 {
            let k = [b[0] + (o >> 2), b[1] + ((o >> 1) & 1), b[2] + (o & 1)];
            if ChildRole::of(k).is_some() {
                out.push(k);
            }
        }
    }
    out.sort_unstable_by_key(|&k| interleave(k));
    out.dedup();
    out
}

/// Largest `|q|` over the midpoint corners of every descendant, per block of
/// the unpruned tree.
pub fn descendant_max_residual(tree: &PrunedOctree, table: &ResidualTable) -> Vec<Vec<u64>> {
    let d = tree.depth() as usize;
    let mut m: Vec<Vec<u64>> = (0..=d).map(|l| vec![0; tree.blocks(l).len()]).collect();
    for l in (0..d).rev() {
        for i in 0..tree.blocks(l).len() {
            let mut best = 0;
            for c in tree.children(l, i) {
                best = best.max(m[l + 1][c]);
            }
            for k in child_midpoints(tree, l, i) {
                if let Some(q) = table.get(l + 1, k) {
                    best = best.max(q.unsigned_abs());
                }
            }
            m[l][i] = best;
        }
    }
    m
}

pub fn prune_zero_wavelets(tree: &PrunedOctree, table: &ResidualTable, start: usize, t: u64) -> PrunedOctree {
    let m = descendant_max_residual(tree, table);
    tree.prune(|l, i| l >= start && m[l][i] <= t)
}

/// Squared-error sums between the original voxels of a block and the
/// voxels its Bezier volume reconstructs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockError {
    pub original: usize,
    pub reconstructed: usize,
    /// Original to reconstructed.
    pub sse_forward: f64,
    pub sse_backward: f64,
}

impl BlockError {
    /// Larger of the two one-way mean squared errors; infinite when the
    /// volume reconstructs nothing.
    pub fn max_mse(&self) -> f64 {
        if self.reconstructed == 0 || self.original == 0 {
            return f64::INFINITY;
        }
        (self.sse_forward / self.original as f64).max(self.sse_backward / self.reconstructed as f64)
    }

    /// Larger of the two one-way sums; additive over disjoint blocks.
    pub fn max_sse(&self) -> f64 {
        if self.reconstructed == 0 || self.original == 0 {
            return f64::INFINITY;
        }
        self.sse_forward.max(self.sse_backward)
    }
}

/// One-way squared-error sum from `a` to its nearest neighbours in `b`.
pub fn one_way_sse(a: &[Voxel], b: &GridIndex) -> f64 {
    a.iter().map(|&p| b.nearest(to_i64(p)).map_or(f64::INFINITY, |(_, d)| d as f64)).sum()
}

/// Error of treating `block` at `level` as a Bezier volume with `corners`.
pub fn block_error(cloud: &VoxelCloud, level: usize, block: Voxel, corners: [f64; 8]) -> BlockError {
    let d = cloud.depth() as usize;
    let span = 3 * (d - level);
    let lo = interleave(block) << span;
    let hi = (interleave(block) + 1) << span;
    let codes = cloud.codes();
    let a = codes.partition_point(|&c| c < lo);
    let z = codes.partition_point(|&c| c < hi);
    let orig = &cloud.positions()[a..z];
    let rec = subdivide(&BezierVolume::new(level, block, corners), 0.0, cloud.depth());
    if rec.is_empty() || orig.is_empty() {
        return BlockError { original: orig.len(), reconstructed: rec.len(), sse_forward: f64::INFINITY, sse_backward: f64::INFINITY };
    }
    let rec_index = GridIndex::new(&rec);
    let orig_index = GridIndex::new(orig);
    BlockError {
        original: orig.len(),
        reconstructed: rec.len(),
        sse_forward: one_way_sse(orig, &rec_index),
        sse_backward: one_way_sse(&rec, &orig_index),
    }
}

/// Topmost blocks (at or below `start`) whose reconstruction error is within
/// `e` become leaves.
pub fn prune_distortion(
    cloud: &VoxelCloud,
    tree: &PrunedOctree,
    recon: &InLoopResult,
    start: usize,
    e: f64,
) -> Result<PrunedOctree> {
    let d = tree.depth() as usize;
    let mut err = None;
    let pruned = tree.prune(|l, i| {
        if l < start || l >= d || err.is_some() {
            return false;
        }
        let b = tree.blocks(l)[i];
        match recon.values.block(l, b) {
            Some(c) => block_error(cloud, l, b, c).max_mse() <= e,
            None => {
                err = Some(Error::InvalidParameter(format!("no controls for block {b:?} at level {l}")));
                false
            }
        }
    });
    err.map_or(Ok(pruned), Err)
}

/// A node of a generic pruning problem.
#[derive(Debug, Clone, PartialEq)]
pub struct RdNode {
    /// Distortion if this node becomes a leaf.
    pub leaf_distortion: f64,
    /// Bits spent by splitting this node (not counting the children's own
    /// subtrees).
    pub split_rate: f64,
    pub children: Vec<usize>,
    /// False forces the node to split.
    pub may_prune: bool,
}

/// Bottom-up optimal pruning minimising `D + lambda R`. Returns, per node,
/// whether it is a leaf of the optimal tree (nodes below a leaf are left
/// `false`), and the optimal cost. Ties prune.
pub fn rd_optimal(nodes: &[RdNode], root: usize, lambda: f64) -> (Vec<bool>, f64) {
    // Post-order without recursion.
    let mut order = Vec::with_capacity(nodes.len());
    let mut stack = vec![(root, false)];
    while let Some((n, expanded)) = stack.pop() {
        if expanded {
            order.push(n);
        } else {
            stack.push((n, true));
            for &c in nodes[n].children.iter().rev() {
                stack.push((c, false));
            }
        }
    }
    let mut cost = vec![0.0; nodes.len()];
    let mut prune_here = vec![false; nodes.len()];
    for &n in &order {
        let node = &nodes[n];
        if node.children.is_empty() {
            cost[n] = node.leaf_distortion;
            prune_here[n] = true;
            continue;
        }
        let split = lambda * node.split_rate + node.children.iter().map(|&c| cost[c]).sum::<f64>();
        if node.may_prune && node.leaf_distortion <= split {
            cost[n] = node.leaf_distortion;
            prune_here[n] = true;
        } else {
            cost[n] = split;
        }
    }
    let mut leaf = vec![false; nodes.len()];
    let mut stack = vec![root];
    while let Some(n) = stack.pop() {
        if prune_here[n] {
            leaf[n] = true;
        } else {
            stack.extend(nodes[n].children.iter().copied());
        }
    }
    (leaf, cost[root])
}

/// Bits of each symbol under the empirical histogram of its level.
fn level_bit_costs(symbols: &[i64]) -> HashMap<i64, f64> {
    let mut counts: HashMap<i64, u64> = HashMap::new();
    for &s in symbols {
        *counts.entry(s).or_default() += 1;
    }
    let n = symbols.len() as f64;
    counts.into_iter().map(|(s, c)| (s, -(c as f64 / n).log2())).collect()
}

/// Squared-error sums of every block at `level` when all of them are Bezier
/// volumes. Original voxels of a block are matched against the whole level's
/// reconstruction and reconstructed voxels against the whole cloud, so
/// surfaces crossing block faces are not charged twice.
pub fn level_block_errors(cloud: &VoxelCloud, tree: &PrunedOctree, values: &CornerField, level: usize) -> Result<Vec<BlockError>> {
    let d = cloud.depth() as usize;
    let span = 3 * (d - level);
    let codes = cloud.codes();
    let mut recs = Vec::with_capacity(tree.blocks(level).len());
    for &b in tree.blocks(level) {
        let c = values
            .block(level, b)
            .ok_or_else(|| Error::InvalidParameter(format!("no controls for block {b:?} at level {level}")))?;
        recs.push(subdivide(&BezierVolume::new(level, b, c), 0.0, cloud.depth()));
    }
    let all: Vec<Voxel> = recs.iter().flatten().copied().collect();
    let rec_index = GridIndex::new(&all);
    let orig_index = GridIndex::new(cloud.positions());
    Ok(tree
        .blocks(level)
        .iter()
        .zip(&recs)
        .map(|(&b, rec)| {
            let a = codes.partition_point(|&c| c < interleave(b) << span);
            let z = codes.partition_point(|&c| c < (interleave(b) + 1) << span);
            let orig = &cloud.positions()[a..z];
            BlockError {
                original: orig.len(),
                reconstructed: rec.len(),
                sse_forward: if all.is_empty() { f64::INFINITY } else { one_way_sse(orig, &rec_index) },
                sse_backward: one_way_sse(rec, &orig_index),
            }
        })
        .collect())
}

fn block_voxels(cloud: &VoxelCloud, level: usize, b: Voxel) -> &[Voxel] {
    let span = 3 * (cloud.depth() as usize - level);
    let codes = cloud.codes();
    let a = codes.partition_point(|&c| c < interleave(b) << span);
    let z = codes.partition_point(|&c| c < (interleave(b) + 1) << span);
    &cloud.positions()[a..z]
}

/// Inputs of rate-distortion pruning, all from one exhaustive in-loop pass
/// over an unpruned tree.
#[derive(Debug, Clone, Copy)]
pub struct RdInput<'a> {
    pub cloud: &'a VoxelCloud,
    pub tree: &'a PrunedOctree,
    pub sdf: &'a CornerField,
    pub recon: &'a InLoopResult,
    pub table: &'a ResidualTable,
    pub quantizer: &'a Quantizer,
    pub start: usize,
}

struct DamageModel<'a> {
    input: RdInput<'a>,
    errors: &'a [Vec<BlockError>],
    orig_index: GridIndex,
}

impl DamageModel<'_> {
    /// Extra error in each descendant of block `ni` (above the voxel level)
    /// when its neighbour `b`, both at `level`, stays a leaf. Lattice points
    /// in the closure of `b` then take its tri-linear interpolant, and coded
    /// points below them are predicted from the changed values and quantised
    /// again. Returns (level, index, damage) for each descendant whose error
    /// grows.
    fn boundary(&self, level: usize, b: Voxel, ni: usize) -> Result<Vec<(usize, usize, f64)>> {
        let RdInput { cloud, tree, sdf, recon, quantizer, .. } = self.input;
        let values = &recon.values;
        let d = cloud.depth() as usize;
        let missing = |l: usize, c: Voxel| Error::InvalidParameter(format!("no controls for block {c:?} at level {l}"));
        let coarse = values.block(level, b).ok_or_else(|| missing(level, b))?;
        let touches = |m: usize, c: Voxel| {
            let k = m - level;
            (0..3).all(|a| c[a] + 1 >= b[a] << k && c[a] <= (b[a] + 1) << k)
        };
        // Values that differ from the exhaustive pass, per level.
        let mut changed: Vec<HashMap<u64, f64>> = vec![HashMap::new(); d];
        let mut out = Vec::new();
        let mut stack: Vec<(usize, usize)> = tree
            .children(level, ni)
            .filter(|&c| touches(level + 1, tree.blocks(level + 1)[c]))
            .map(|c| (level + 1, c))
            .collect();
        while let Some((m, ci)) = stack.pop() {
            if m >= d {
                continue;
            }
            let c = tree.blocks(m)[ci];
            let k = m - level;
            let scale = (1u64 << k) as f64;
            let old = values.block(m, c).ok_or_else(|| missing(m, c))?;
            let mut new = old;
            for (o, v) in new.iter_mut().enumerate() {
                let off = corner_offset(o);
                let p = [c[0] + off[0], c[1] + off[1], c[2] + off[2]];
                let key = interleave(p);
                if let Some(&x) = changed[m].get(&key) {
                    *v = x;
                    continue;
                }
                let up = &changed[m - 1];
                let x = if (0..3).all(|a| b[a] << k <= p[a] && p[a] <= (b[a] + 1) << k) {
                    let t = |a: usize| (p[a] - (b[a] << k)) as f64 / scale;
                    trilinear(&coarse, t(0), t(1), t(2))
                } else if up.is_empty() {
                    old[o]
                } else if ChildRole::of(p).is_none() {
                    up.get(&interleave(p.map(|x| x >> 1))).copied().unwrap_or(old[o])
                } else {
                    let pred = predict_child(p, |q| up.get(&interleave(q)).copied().or_else(|| values.get(m - 1, q)))?;
                    let f = sdf
                        .get(m, p)
                        .ok_or_else(|| Error::InvalidParameter(format!("no signed distance for corner {p:?} at level {m}")))?;
                    pred + quantizer.dequantize(quantizer.quantize(f - pred))
                };
                if x != old[o] {
                    changed[m].insert(key, x);
                }
                *v = x;
            }
            if new == old {
                if touches(m, c) {
                    stack.extend(tree.children(m, ci).map(|g| (m + 1, g)));
                }
                continue;
            }
            stack.extend(tree.children(m, ci).map(|g| (m + 1, g)));
            let rec_old = subdivide(&BezierVolume::new(m, c, old), 0.0, cloud.depth());
            let rec_new = subdivide(&BezierVolume::new(m, c, new), 0.0, cloud.depth());
            let e = &self.errors[m][ci];
            let backward = one_way_sse(&rec_new, &self.orig_index);
            let forward = if rec_old.is_empty() || rec_new.is_empty() {
                e.sse_forward
            } else {
                let orig = block_voxels(cloud, m, c);
                e.sse_forward + one_way_sse(orig, &GridIndex::new(&rec_new)) - one_way_sse(orig, &GridIndex::new(&rec_old))
            };
            let extra = forward.max(backward) - e.sse_forward.max(e.sse_backward);
            if extra > 0.0 {
                out.push((m, ci, extra));
            }
        }
        Ok(out)
    }
}

/// Rounds of the pruning program that re-price face damage.
const DAMAGE_ROUNDS: usize = 16;

/// Rate-distortion pruning of an unpruned tree, with everything that does not
/// depend on lambda precomputed. Distortion is the larger of the two
/// squared-error sums from [`level_block_errors`]; rate counts one occupancy
/// byte per split, one flag bit per flagged child and the empirical entropy
/// of the children's midpoint residuals. A leaf is also charged the damage
/// its boundary does to finer leaves next to it; the program is rerun with
/// the charges of the previous round's tree.
#[derive(Debug, Clone)]
pub struct RdPruner {
    tree: PrunedOctree,
    nodes: Vec<RdNode>,
    offset: Vec<usize>,
    /// (neighbour node, damage) pairs per node.
    damage: Vec<Vec<(usize, f64)>>,
}

impl RdPruner {
    pub fn new(input: RdInput<'_>) -> Result<Self> {
        let RdInput { cloud, tree, recon, table, start, .. } = input;
        let d = tree.depth() as usize;
        let bit_costs: Vec<HashMap<i64, f64>> = (0..=d).map(|l| level_bit_costs(&table.level_symbols(l))).collect();
        let mut offset = vec![0usize; d + 2];
        for l in 0..=d {
            offset[l + 1] = offset[l] + tree.blocks(l).len();
        }
        let mut errors = vec![Vec::new(); d + 1];
        for (l, e) in errors.iter_mut().enumerate().take(d).skip(start) {
            *e = level_block_errors(cloud, tree, &recon.values, l)?;
        }
        let mut nodes = Vec::with_capacity(offset[d + 1]);
        for l in 0..=d {
            for i in 0..tree.blocks(l).len() {
                let children: Vec<usize> = tree.children(l, i).map(|c| offset[l + 1] + c).collect();
                let may_prune = l >= start && l < d;
                let leaf_distortion = if l == d {
                    0.0
                } else if may_prune {
                    let e = &errors[l][i];
                    e.sse_forward.max(e.sse_backward)
                } else {
                    f64::INFINITY
                };
                let mut split_rate = 0.0;
                if l < d {
                    split_rate += 8.0;
                    if l + 1 >= start && l + 1 < d {
                        split_rate += children.len() as f64;
                        for k in child_midpoints(tree, l, i) {
                            if let Some(q) = table.get(l + 1, k) {
                                split_rate += bit_costs[l + 1].get(&q).copied().unwrap_or(0.0);
                            }
                        }
                    }
                }
                nodes.push(RdNode { leaf_distortion, split_rate, children, may_prune });
            }
        }

        let model = DamageModel { input, errors: &errors, orig_index: GridIndex::new(cloud.positions()) };
        let mut damage: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nodes.len()];
        for l in start..d.saturating_sub(1) {
            let side = 1i64 << l;
            for (i, &b) in tree.blocks(l).iter().enumerate() {
                for o in 0..27 {
                    let step = [o / 9 - 1, (o / 3) % 3 - 1, o % 3 - 1];
                    if step == [0, 0, 0] {
                        continue;
                    }
                    let nb = [0, 1, 2].map(|a| b[a] as i64 + step[a]);
                    if nb.iter().any(|&v| v < 0 || v >= side) {
                        continue;
                    }
                    let Some(ni) = tree.find(l, nb.map(|v| v as u32)) else { continue };
                    for (m, ci, dmg) in model.boundary(l, b, ni)? {
                        damage[offset[l] + i].push((offset[m] + ci, dmg));
                    }
                }
            }
        }
        Ok(Self { tree: tree.clone(), nodes, offset, damage })
    }

    pub fn prune(&self, lambda: f64) -> PrunedOctree {
        let mut nodes = self.nodes.clone();
        let (mut leaf, _) = rd_optimal(&nodes, 0, lambda);
        for _ in 1..DAMAGE_ROUNDS {
            for (n, node) in nodes.iter_mut().enumerate() {
                let charge: f64 = self.damage[n].iter().filter(|(m, _)| leaf[*m]).map(|(_, x)| x).sum();
                node.leaf_distortion = self.nodes[n].leaf_distortion + charge;
            }
            let (next, _) = rd_optimal(&nodes, 0, lambda);
            if next == leaf {
                break;
            }
            leaf = next;
        }
        self.tree.prune(|l, i| leaf[self.offset[l] + i])
    }
}

/// One-shot [`RdPruner`].
pub fn prune_rd(input: RdInput<'_>, lambda: f64) -> Result<PrunedOctree> {
    Ok(RdPruner::new(input)?.prune(lambda))
}
