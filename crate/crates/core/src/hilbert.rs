//! Counting-measure inner products, B-spline bases of order 1 and 2 on the
//! voxel octree, Gram and moment recursions, and least-squares projection
//! onto the nested spaces.
//!
//! Points sit at voxel origins `x = v / 2^d`. Order-1 bases are block
//! indicators at every binary level `0..=3d`; order-2 bases are tri-linear
//! hats at cubic levels `0..=d`, centred on the corners of occupied blocks.
//! At the finest order-2 level only hats centred on voxels are nonzero on the
//! support, so that level's shift set is the voxel set and its Gram matrix
//! is the identity.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::linalg::dense::pivoted_cholesky_keep;
use crate::linalg::{connected_components, conjugate_gradient, nested_dissection, Csr, SparseCholesky};
use crate::voxel::{axis_bits, unique_corners, OctreeLevels, VoxelCloud};

/// Relative Schur-pivot threshold used to drop dependent basis functions.
pub const RANK_TOL: f64 = 1e-9;
/// Systems larger than this are solved iteratively.
pub const DIRECT_SOLVE_LIMIT: usize = 20_000;
/// Components up to this size are rank-reduced densely.
const DENSE_COMPONENT_LIMIT: usize = 1500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisOrder {
    /// Piecewise constant (p = 1): block indicators over the binary tree.
    Constant,
    /// Tri-linear (p = 2): hats over the cubic octree.
    Trilinear,
}

impl BasisOrder {
    pub fn p(self) -> u8 {
        match self {
            BasisOrder::Constant => 1,
            BasisOrder::Trilinear => 2,
        }
    }

    /// Finest level index for a cloud of depth `d`.
    pub fn top_level(self, depth: u8) -> usize {
        match self {
            BasisOrder::Constant => 3 * depth as usize,
            BasisOrder::Trilinear => depth as usize,
        }
    }

    /// Lattice resolution bits per axis at level `j`.
    pub fn bits(self, j: usize) -> [u32; 3] {
        match self {
            BasisOrder::Constant => axis_bits(j),
            BasisOrder::Trilinear => [j as u32; 3],
        }
    }
}

/// `Σ f(x_i) g(x_i)` over the support.
pub fn inner_product(f: &[f64], g: &[f64]) -> Result<f64> {
    if f.len() != g.len() {
        return Err(Error::LengthMismatch { expected: f.len(), actual: g.len() });
    }
    Ok(f.iter().zip(g).map(|(a, b)| a * b).sum())
}

#[inline]
pub fn hat(t: f64) -> f64 {
    (1.0 - t.abs()).max(0.0)
}

/// Two-scale coefficient of the tri-linear hat, `2^{-|k|_1}` on
/// `{-1, 0, 1}^3` and zero elsewhere.
pub fn two_scale_coefficient(k: [i64; 3]) -> f64 {
    if k.iter().any(|&c| c.abs() > 1) {
        return 0.0;
    }
    let l1: i64 = k.iter().map(|c| c.abs()).sum();
    0.5f64.powi(l1 as i32)
}

/// Basis function with lattice resolution `bits` and shift `n`, evaluated at
/// `x` in the unit cube.
pub fn eval_basis(order: BasisOrder, bits: [u32; 3], n: [u32; 3], x: [f64; 3]) -> f64 {
    match order {
        BasisOrder::Constant => {
            let inside = (0..3).all(|a| {
                let s = (1u64 << bits[a]) as f64;
                let t = x[a] * s;
                t >= n[a] as f64 && t < n[a] as f64 + 1.0
            });
            if inside {
                1.0
            } else {
                0.0
            }
        }
        BasisOrder::Trilinear => (0..3)
            .map(|a| hat(x[a] * (1u64 << bits[a]) as f64 - n[a] as f64))
            .product(),
    }
}

/// Location of a voxel's support point in the unit cube.
pub fn point_location(v: [u32; 3], depth: u8) -> [f64; 3] {
    let s = (1u64 << depth) as f64;
    [v[0] as f64 / s, v[1] as f64 / s, v[2] as f64 / s]
}

/// One level of the hierarchy.
#[derive(Debug, Clone)]
pub struct Level {
    pub bits: [u32; 3],
    /// Shift set in Morton order.
    pub shifts: Vec<[u32; 3]>,
    /// Gram matrix of the full shift set.
    pub gram: Csr,
    /// Two-scale matrix to the next finer level, absent at the top.
    pub two_scale: Option<Csr>,
}

/// Gram matrices and two-scale maps at every level of one basis order.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    order: BasisOrder,
    depth: u8,
    num_points: usize,
    levels: Vec<Level>,
}

impl Hierarchy {
    pub fn build(octree: &OctreeLevels, order: BasisOrder) -> Result<Self> {
        let depth = octree.depth();
        let top = order.top_level(depth);
        let n = octree.num_voxels();
        let mut shifts: Vec<Vec<[u32; 3]>> = Vec::with_capacity(top + 1);
        for j in 0..=top {
            let s = match order {
                BasisOrder::Constant => (0..octree.num_blocks(j)).map(|b| octree.block_shift(j, b)).collect(),
                BasisOrder::Trilinear if j == top => {
                    let leaf = octree.max_level();
                    (0..n).map(|b| octree.block_shift(leaf, b)).collect()
                }
                BasisOrder::Trilinear => unique_corners(octree, 3 * j)?.corners,
            };
            shifts.push(s);
        }
        let mut two_scale: Vec<Option<Csr>> = vec![None; top + 1];
        for j in 0..top {
            let a = match order {
                BasisOrder::Constant => {
                    let trips = (0..octree.num_blocks(j))
                        .flat_map(|b| octree.children(j, b).map(move |c| (b, c, 1.0)))
                        .collect();
                    Csr::from_triplets(shifts[j].len(), shifts[j + 1].len(), trips)
                }
                BasisOrder::Trilinear => {
                    let fine: HashMap<[u32; 3], usize> =
                        shifts[j + 1].iter().enumerate().map(|(i, &s)| (s, i)).collect();
                    let mut trips = Vec::new();
                    for (i, n) in shifts[j].iter().enumerate() {
                        for k in offsets27() {
                            let m = [
                                2 * n[0] as i64 + k[0],
                                2 * n[1] as i64 + k[1],
                                2 * n[2] as i64 + k[2],
                            ];
                            if m.iter().any(|&c| c < 0) {
                                continue;
                            }
                            let m = [m[0] as u32, m[1] as u32, m[2] as u32];
                            if let Some(&col) = fine.get(&m) {
                                trips.push((i, col, two_scale_coefficient(k)));
                            }
                        }
                    }
                    Csr::from_triplets(shifts[j].len(), shifts[j + 1].len(), trips)
                }
            };
            two_scale[j] = Some(a);
        }
        let mut grams: Vec<Option<Csr>> = vec![None; top + 1];
        grams[top] = Some(Csr::identity(n));
        for j in (0..top).rev() {
            let a = two_scale[j].as_ref().unwrap();
            let g = a.matmul(grams[j + 1].as_ref().unwrap()).matmul(&a.transpose());
            grams[j] = Some(g);
        }
        let levels = shifts
            .into_iter()
            .zip(grams)
            .zip(two_scale)
            .enumerate()
            .map(|(j, ((shifts, gram), two_scale))| Level {
                bits: order.bits(j),
                shifts,
                gram: gram.unwrap(),
                two_scale,
            })
            .collect();
        Ok(Self { order, depth, num_points: n, levels })
    }

    pub fn order(&self) -> BasisOrder {
        self.order
    }

    pub fn depth(&self) -> u8 {
        self.depth
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn top(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, j: usize) -> &Level {
        &self.levels[j]
    }

    /// `Φ_jᵀ Φ_{j+1} = A_j G_{j+1}`.
    pub fn cross_gram(&self, j: usize) -> Result<Csr> {
        let a = self
            .levels
            .get(j)
            .and_then(|l| l.two_scale.as_ref())
            .ok_or(Error::LevelOutOfRange { level: j, max: self.top().saturating_sub(1) })?;
        Ok(a.matmul(&self.levels[j + 1].gram))
    }

    /// Moments `Φ_jᵀ f` at every level via the two-scale recursion.
    pub fn moments(&self, f: &[f64]) -> Result<Vec<Vec<f64>>> {
        if f.len() != self.num_points {
            return Err(Error::LengthMismatch { expected: self.num_points, actual: f.len() });
        }
        let top = self.top();
        let mut out = vec![Vec::new(); top + 1];
        out[top] = f.to_vec();
        for j in (0..top).rev() {
            out[j] = self.levels[j].two_scale.as_ref().unwrap().matvec(&out[j + 1]);
        }
        Ok(out)
    }

    /// `Φ_j` evaluated directly at the support points: `N × |S_j|`.
    pub fn basis_matrix(&self, j: usize, cloud: &VoxelCloud) -> Result<Csr> {
        basis_matrix(self.order, j, &self.levels[j].shifts, cloud)
    }
}

fn offsets27() -> impl Iterator<Item = [i64; 3]> {
    (0..27).map(|i| [(i / 9) as i64 - 1, ((i / 3) % 3) as i64 - 1, (i % 3) as i64 - 1])
}

/// Direct evaluation of level-`j` basis functions with shift set `shifts` at
/// every support point of `cloud`. Shifts absent from `shifts` must vanish on
/// the support.
pub fn basis_matrix(order: BasisOrder, j: usize, shifts: &[[u32; 3]], cloud: &VoxelCloud) -> Result<Csr> {
    let index: HashMap<[u32; 3], usize> = shifts.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let d = cloud.depth() as u32;
    let bits = order.bits(j);
    let mut trips = Vec::new();
    for (p, v) in cloud.positions().iter().enumerate() {
        let base = [v[0] >> (d - bits[0]), v[1] >> (d - bits[1]), v[2] >> (d - bits[2])];
        match order {
            BasisOrder::Constant => {
                let col = *index.get(&base).ok_or_else(|| Error::InvalidParameter("shift set misses a block".into()))?;
                trips.push((p, col, 1.0));
            }
            BasisOrder::Trilinear => {
                for c in 0..8 {
                    let o = crate::voxel::corner_offset(c);
                    let n = [base[0] + o[0], base[1] + o[1], base[2] + o[2]];
                    let mut val = 1.0;
                    for a in 0..3 {
                        let scale = (1u64 << (d - bits[a])) as f64;
                        val *= hat((v[a] as f64 - n[a] as f64 * scale) / scale);
                    }
                    if val == 0.0 {
                        continue;
                    }
                    let col = *index
                        .get(&n)
                        .ok_or_else(|| Error::InvalidParameter("shift set misses a supported hat".into()))?;
                    trips.push((p, col, val));
                }
            }
        }
    }
    Ok(Csr::from_triplets(cloud.len(), shifts.len(), trips))
}

/// Greedy rank reduction: indices of a maximal linearly independent subset
/// of the basis, ascending. Each connected component of the Gram pattern is
/// handled separately; small ones with diagonal pivoting, large ones with a
/// sparse factorisation in nested-dissection order.
pub fn rank_reduce(gram: &Csr, shifts: &[[u32; 3]]) -> Result<Vec<usize>> {
    if gram.nrows() != shifts.len() {
        return Err(Error::LengthMismatch { expected: gram.nrows(), actual: shifts.len() });
    }
    let mut kept = Vec::new();
    for comp in connected_components(gram) {
        if comp.len() <= DENSE_COMPONENT_LIMIT {
            let block = gram.dense_block(&comp, &comp);
            kept.extend(pivoted_cholesky_keep(&block, RANK_TOL).into_iter().map(|i| comp[i]));
        } else {
            let sub = gram.select(&comp, &comp);
            let pts: Vec<[u32; 3]> = comp.iter().map(|&i| shifts[i]).collect();
            let order = nested_dissection(&pts);
            let f = SparseCholesky::factor(&sub, &order, RANK_TOL)?;
            kept.extend(f.kept().into_iter().map(|i| comp[i]));
        }
    }
    kept.sort_unstable();
    Ok(kept)
}

/// Least-squares projection onto a level: retained shifts and coefficients
/// on the full shift set (zero at dropped shifts).
#[derive(Debug, Clone)]
pub struct Projection {
    pub kept: Vec<usize>,
    /// One coefficient vector per channel.
    pub coeffs: Vec<Vec<f64>>,
}

impl Projection {
    pub fn rank(&self) -> usize {
        self.kept.len()
    }
}

/// Solves the normal equations `G c = m` on the rank-reduced shift set for
/// each moment vector.
pub fn project(gram: &Csr, shifts: &[[u32; 3]], moments: &[Vec<f64>]) -> Result<Projection> {
    let n = gram.nrows();
    for m in moments {
        if m.len() != n {
            return Err(Error::LengthMismatch { expected: n, actual: m.len() });
        }
    }
    let kept = rank_reduce(gram, shifts)?;
    let sub = gram.select(&kept, &kept);
    let mut coeffs = Vec::with_capacity(moments.len());
    if kept.len() <= DIRECT_SOLVE_LIMIT {
        let pts: Vec<[u32; 3]> = kept.iter().map(|&i| shifts[i]).collect();
        let f = SparseCholesky::factor(&sub, &nested_dissection(&pts), 0.0)?;
        if f.rank() != kept.len() {
            return Err(Error::NumericalRank("reduced Gram matrix is singular".into()));
        }
        for m in moments {
            let b: Vec<f64> = kept.iter().map(|&i| m[i]).collect();
            let x = f.solve(&b);
            let mut full = vec![0.0; n];
            for (&i, v) in kept.iter().zip(x) {
                full[i] = v;
            }
            coeffs.push(full);
        }
    } else {
        for m in moments {
            let b: Vec<f64> = kept.iter().map(|&i| m[i]).collect();
            let (x, _) = conjugate_gradient(&sub, &b, 1e-10, 10 * kept.len())?;
            let mut full = vec![0.0; n];
            for (&i, v) in kept.iter().zip(x) {
                full[i] = v;
            }
            coeffs.push(full);
        }
    }
    Ok(Projection { kept, coeffs })
}

/// Projects the attribute channels of `cloud` onto level `j` and returns the
/// projection together with the fitted values at the support points.
pub fn project_cloud(
    hierarchy: &Hierarchy,
    cloud: &VoxelCloud,
    j: usize,
) -> Result<(Projection, Vec<Vec<f64>>)> {
    let level = hierarchy.level(j);
    let moments: Vec<Vec<f64>> = (0..cloud.attr_dim())
        .map(|c| hierarchy.moments(&cloud.channel(c)).map(|mut m| m.swap_remove(j)))
        .collect::<Result<_>>()?;
    let proj = project(&level.gram, &level.shifts, &moments)?;
    let phi = hierarchy.basis_matrix(j, cloud)?;
    let fitted = proj.coeffs.iter().map(|c| phi.matvec(c)).collect();
    Ok((proj, fitted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxel::VoxelCloud;
    use rand::{Rng, SeedableRng};

    pub(crate) fn random_cloud(seed: u64, n: usize, d: u8) -> VoxelCloud {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = 1u32 << d;
        let pos: Vec<[u32; 3]> = (0..n).map(|_| [rng.gen_range(0..m), rng.gen_range(0..m), rng.gen_range(0..m)]).collect();
        let attrs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..255.0)).collect();
        VoxelCloud::from_unsorted(d, pos, 1, attrs, None).unwrap()
    }

    #[test]
    fn inner_product_examples() {
        assert_eq!(inner_product(&[1.0; 5], &[1.0; 5]).unwrap(), 5.0);
        assert_eq!(inner_product(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert!(inner_product(&[1.0], &[1.0, 2.0]).is_err());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let f: Vec<f64> = (0..100).map(|_| rng.gen()).collect();
        let g: Vec<f64> = (0..100).map(|_| rng.gen()).collect();
        let oracle: f64 = f.iter().zip(&g).map(|(a, b)| a * b).sum();
        assert_eq!(inner_product(&f, &g).unwrap(), oracle);
    }

    #[test]
    fn basis_values() {
        let b = [2, 2, 2];
        assert_eq!(eval_basis(BasisOrder::Trilinear, b, [1, 1, 1], [0.25, 0.25, 0.25]), 1.0);
        assert_eq!(eval_basis(BasisOrder::Trilinear, b, [1, 1, 1], [0.5, 0.25, 0.25]), 0.0);
        assert_eq!(eval_basis(BasisOrder::Trilinear, b, [1, 1, 1], [0.375, 0.375, 0.375]), 0.125);
        assert_eq!(eval_basis(BasisOrder::Constant, [1, 0, 0], [1, 0, 0], [0.6, 0.9, 0.1]), 1.0);
        assert_eq!(eval_basis(BasisOrder::Constant, [1, 0, 0], [1, 0, 0], [0.4, 0.9, 0.1]), 0.0);
        assert_eq!(two_scale_coefficient([0, 0, 0]), 1.0);
        assert_eq!(two_scale_coefficient([1, -1, 1]), 0.125);
        assert_eq!(two_scale_coefficient([2, 0, 0]), 0.0);
    }

    #[test]
    fn voxel_level_is_identity() {
        let cloud = random_cloud(1, 3, 3);
        let oct = OctreeLevels::build(&cloud).unwrap();
        let h = Hierarchy::build(&oct, BasisOrder::Trilinear).unwrap();
        let top = h.top();
        assert_eq!(h.level(top).gram.to_dense(), nalgebra::DMatrix::identity(3, 3));
        let m = h.moments(&cloud.channel(0)).unwrap();
        assert_eq!(m[top], cloud.channel(0));
        let phi = h.basis_matrix(top, &cloud).unwrap();
        assert_eq!(phi.to_dense(), nalgebra::DMatrix::identity(3, 3));
    }

    #[test]
    fn recursion_matches_direct_gram() {
        for (seed, order) in (0..12).flat_map(|s| [(s, BasisOrder::Trilinear), (s, BasisOrder::Constant)]) {
            let cloud = random_cloud(seed, 1 + (seed as usize * 5) % 64, 3);
            let oct = OctreeLevels::build(&cloud).unwrap();
            let h = Hierarchy::build(&oct, order).unwrap();
            let f = cloud.channel(0);
            let moments = h.moments(&f).unwrap();
            for j in 0..=h.top() {
                let phi = h.basis_matrix(j, &cloud).unwrap();
                let direct = phi.transpose().matmul(&phi).to_dense();
                let diff = (direct - h.level(j).gram.to_dense()).abs().max();
                assert!(diff < 1e-12, "{order:?} level {j}: {diff}");
                let dm = phi.tr_matvec(&f);
                for (a, b) in dm.iter().zip(&moments[j]) {
                    assert!((a - b).abs() < 1e-9);
                }
                if j < h.top() {
                    let cross = h.cross_gram(j).unwrap().to_dense();
                    let phi1 = h.basis_matrix(j + 1, &cloud).unwrap();
                    let direct = phi.transpose().matmul(&phi1).to_dense();
                    assert!((cross - direct).abs().max() < 1e-12);
                }
                if order == BasisOrder::Constant {
                    for b in 0..oct.num_blocks(j) {
                        assert_eq!(h.level(j).gram.get(b, b), oct.weight(j, b) as f64);
                    }
                }
            }
        }
    }

    #[test]
    fn constant_projection_is_block_mean() {
        let cloud = random_cloud(7, 40, 3);
        let oct = OctreeLevels::build(&cloud).unwrap();
        let h = Hierarchy::build(&oct, BasisOrder::Constant).unwrap();
        let f = cloud.channel(0);
        for j in [0, 2, 5, 9] {
            let (p, _) = project_cloud(&h, &cloud, j).unwrap();
            for b in 0..oct.num_blocks(j) {
                let r = oct.voxel_range(j, b);
                let mean = f[r.clone()].iter().sum::<f64>() / r.len() as f64;
                assert!((p.coeffs[0][b] - mean).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_field_projects_to_constant() {
        let base = random_cloud(9, 50, 3);
        let n = base.len();
        let cloud = base.with_attributes(1, vec![3.5; n]).unwrap();
        let oct = OctreeLevels::build(&cloud).unwrap();
        let h = Hierarchy::build(&oct, BasisOrder::Trilinear).unwrap();
        for j in 0..=3 {
            let (_, fitted) = project_cloud(&h, &cloud, j).unwrap();
            assert!(fitted[0].iter().all(|v| (v - 3.5).abs() < 1e-9));
        }
    }

    #[test]
    fn normal_equations_and_pythagoras() {
        for seed in 0..10 {
            let cloud = random_cloud(100 + seed, 10 + seed as usize * 10, 4);
            let oct = OctreeLevels::build(&cloud).unwrap();
            let h = Hierarchy::build(&oct, BasisOrder::Trilinear).unwrap();
            let f = cloud.channel(0);
            let mut fits = Vec::new();
            for j in 0..=h.top() {
                let (p, mut fitted) = project_cloud(&h, &cloud, j).unwrap();
                let phi = h.basis_matrix(j, &cloud).unwrap();
                let resid: Vec<f64> = f.iter().zip(&fitted[0]).map(|(a, b)| a - b).collect();
                let m = phi.tr_matvec(&resid);
                let scale = f.iter().map(|v| v.abs()).fold(0.0, f64::max);
                for &k in &p.kept {
                    assert!(m[k].abs() < 1e-9 * scale * f.len() as f64, "seed {seed} level {j}: {}", m[k]);
                }
                // Dropped shifts are in the span, so their residual moment
                // vanishes as well.
                assert!(m.iter().all(|v| v.abs() < 1e-7 * scale * f.len() as f64));
                fits.push(fitted.swap_remove(0));
            }
            let top = h.top();
            assert!(fits[top].iter().zip(&f).all(|(a, b)| (a - b).abs() < 1e-9));
            let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
            let norm = f.iter().map(|v| v * v).sum::<f64>();
            for j in 0..top {
                let lhs = sq(&f, &fits[j]);
                let rhs = sq(&f, &fits[j + 1]) + sq(&fits[j + 1], &fits[j]);
                assert!((lhs - rhs).abs() < 1e-8 * norm, "seed {seed} level {j}");
            }
        }
    }

    #[test]
    fn gram_is_positive_semidefinite() {
        for seed in 0..8 {
            let cloud = random_cloud(200 + seed, 30, 3);
            let oct = OctreeLevels::build(&cloud).unwrap();
            let h = Hierarchy::build(&oct, BasisOrder::Trilinear).unwrap();
            for j in 0..=h.top() {
                let g = h.level(j).gram.to_dense();
                let min = g.symmetric_eigenvalues().min();
                assert!(min >= -1e-10);
            }
        }
    }
}
