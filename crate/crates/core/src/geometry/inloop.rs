//! Level-sequential coding of corner controls with quantisation in the loop.

use std::collections::HashSet;

use crate::entropy::Quantizer;
use crate::error::{Error, Result};
use crate::geometry::sdf::{block_corners, predict_child, CornerField, ChildRole};
use crate::geometry::tree::PrunedOctree;
use crate::voxel::{interleave, Voxel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CornerRole {
    /// Start-level control, quantised directly.
    Start,
    /// Also a parent corner: value copied from the parent level.
    Inherited,
    /// Midpoint with a coded residual.
    Coded,
    /// Midpoint on the boundary of a coarser Bezier volume: set to the
    /// prediction so both sides interpolate the same face.
    Constrained,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelPlan {
    pub level: usize,
    /// Morton sorted.
    pub corners: Vec<Voxel>,
    pub roles: Vec<CornerRole>,
}

impl LevelPlan {
    /// Number of values this level puts in the stream.
    pub fn num_symbols(&self) -> usize {
        self.roles.iter().filter(|r| matches!(r, CornerRole::Start | CornerRole::Coded)).count()
    }
}

/// Which corners are coded at each level, derived identically by encoder and
/// decoder from the pruned tree.
#[derive(Debug, Clone, PartialEq)]
pub struct CodingPlan {
    pub start: usize,
    pub levels: Vec<LevelPlan>,
}

impl CodingPlan {
    /// Corners needed to decode `tree`: at each level from `start`, the
    /// corners of Bezier-volume leaves and of internal blocks whose children
    /// are not voxels.
    pub fn for_tree(tree: &PrunedOctree, start: usize) -> Result<Self> {
        let d = tree.depth() as usize;
        if start > d {
            return Err(Error::InvalidParameter(format!("start level {start} beyond depth {d}")));
        }
        for (l, _) in tree.bezier_leaves() {
            if l < start {
                return Err(Error::InvalidParameter(format!("leaf at level {l} above start level {start}")));
            }
        }
        let bvs = tree.bezier_leaf_set();
        let levels = (start..d)
            .map(|l| {
                let needed = tree
                    .blocks(l)
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| tree.is_leaf(l, i) || l + 1 < d)
                    .map(|(_, b)| b);
                Self::level(l, start, block_corners(needed), Some(&bvs))
            })
            .collect();
        Ok(Self { start, levels })
    }

    /// Every corner of every block at levels `start..=last` of an unpruned
    /// tree; used to estimate residuals before pruning.
    pub fn exhaustive(tree: &PrunedOctree, start: usize, last: usize) -> Result<Self> {
        let d = tree.depth() as usize;
        if start > last || last > d {
            return Err(Error::InvalidParameter(format!("levels {start}..={last} invalid for depth {d}")));
        }
        let levels = (start..=last).map(|l| Self::level(l, start, block_corners(tree.blocks(l)), None)).collect();
        Ok(Self { start, levels })
    }

    fn level(l: usize, start: usize, corners: Vec<Voxel>, bvs: Option<&HashSet<(usize, u64)>>) -> LevelPlan {
        let roles = corners
            .iter()
            .map(|&c| {
                if l == start {
                    CornerRole::Start
                } else if ChildRole::of(c).is_none() {
                    CornerRole::Inherited
                } else if bvs.is_some_and(|s| on_coarser_leaf(c, l, start, s)) {
                    CornerRole::Constrained
                } else {
                    CornerRole::Coded
                }
            })
            .collect();
        LevelPlan { level: l, corners, roles }
    }

    pub fn level_plan(&self, level: usize) -> Option<&LevelPlan> {
        level.checked_sub(self.start).and_then(|i| self.levels.get(i))
    }

    pub fn num_symbols(&self) -> usize {
        self.levels.iter().map(LevelPlan::num_symbols).sum()
    }
}

/// True when lattice point `c` at level `l` lies in the closure of a Bezier
/// leaf at a coarser level.
fn on_coarser_leaf(c: Voxel, l: usize, start: usize, bvs: &HashSet<(usize, u64)>) -> bool {
    for m in start..l {
        let k = l - m;
        let side = 1u32 << m;
        let mut cand: [Vec<u32>; 3] = Default::default();
        for a in 0..3 {
            let q = c[a] >> k;
            if q < side {
                cand[a].push(q);
            }
            if c[a] & ((1 << k) - 1) == 0 && q >= 1 {
                cand[a].push(q - 1);
            }
        }
        for &x in &cand[0] {
            for &y in &cand[1] {
                for &z in &cand[2] {
                    if bvs.contains(&(m, interleave([x, y, z]))) {
                        return true;
                    }
                }
            }
        }
    }
    false
}

/// Reconstructed values and the integer symbols per level.
#[derive(Debug, Clone, PartialEq)]
pub struct InLoopResult {
    pub values: CornerField,
    /// `symbols[i]` belongs to plan level `start + i`, in corner order.
    pub symbols: Vec<Vec<i64>>,
}

/// Walks the plan level by level. `source(level, corner, prediction)`
/// supplies the symbol of each coded corner (prediction is zero at the
/// start level).
fn walk(
    plan: &CodingPlan,
    depth: u8,
    q: &Quantizer,
    mut source: impl FnMut(usize, Voxel, f64) -> Result<i64>,
) -> Result<InLoopResult> {
    let mut values = CornerField::new(depth);
    let mut symbols = Vec::with_capacity(plan.levels.len());
    for lp in &plan.levels {
        let l = lp.level;
        let mut syms = Vec::with_capacity(lp.num_symbols());
        for (&c, &role) in lp.corners.iter().zip(&lp.roles) {
            let v = match role {
                CornerRole::Start => {
                    let s = source(l, c, 0.0)?;
                    syms.push(s);
                    q.dequantize(s)
                }
                CornerRole::Inherited => values
                    .get(l - 1, [c[0] >> 1, c[1] >> 1, c[2] >> 1])
                    .ok_or_else(|| Error::Corrupt(format!("parent of corner {c:?} missing at level {}", l - 1)))?,
                CornerRole::Coded | CornerRole::Constrained => {
                    let parent = &values.levels[l - 1];
                    let pred = predict_child(c, |p| parent.get(&interleave(p)).copied())?;
                    if role == CornerRole::Coded {
                        let s = source(l, c, pred)?;
                        syms.push(s);
                        pred + q.dequantize(s)
                    } else {
                        pred
                    }
                }
            };
            values.insert(l, c, v);
        }
        symbols.push(syms);
    }
    Ok(InLoopResult { values, symbols })
}

/// Encoder side: residual against the reconstructed prediction, quantised.
pub fn encode_in_loop(plan: &CodingPlan, sdf: &CornerField, depth: u8, q: &Quantizer) -> Result<InLoopResult> {
    walk(plan, depth, q, |l, c, pred| {
        let f = sdf
            .get(l, c)
            .ok_or_else(|| Error::InvalidParameter(format!("no signed distance for corner {c:?} at level {l}")))?;
        Ok(q.quantize(f - pred))
    })
}

/// Decoder side: consumes `symbols` in plan order.
pub fn decode_in_loop(plan: &CodingPlan, symbols: &[Vec<i64>], depth: u8, q: &Quantizer) -> Result<CornerField> {
    if symbols.len() != plan.levels.len() {
        return Err(Error::LengthMismatch { expected: plan.levels.len(), actual: symbols.len() });
    }
    for (lp, s) in plan.levels.iter().zip(symbols) {
        if lp.num_symbols() != s.len() {
            return Err(Error::Corrupt(format!(
                "level {} carries {} symbols, plan needs {}",
                lp.level,
                s.len(),
                lp.num_symbols()
            )));
        }
    }
    let mut cursor = vec![0usize; symbols.len()];
    let start = plan.start;
    Ok(walk(plan, depth, q, |l, _, _| {
        let i = l - start;
        let s = symbols[i][cursor[i]];
        cursor[i] += 1;
        Ok(s)
    })?
    .values)
}
