//! Orthonormal region-adaptive wavelet transform on the counting measure,
//! for either basis order.
//!
//! Each level step maps the orthonormal coefficients `F̄_{j+1}` to
//! `[F̄_j; Ḡ_j]` with an orthonormal matrix assembled per connected component
//! of the coupling between the two levels:
//!
//! * `R_j = U Λ^{-1/2}` from `G_j = U Λ Uᵀ` orthonormalises `Φ_j`;
//! * `Z` is an orthonormal basis of the null space of the cross Gram
//!   `X = Φ_jᵀ Φ_{j+1}`;
//! * `S = V Δ^{-1/2}` from `Zᵀ G_{j+1} Z = V Δ Vᵀ` orthonormalises the
//!   wavelets;
//! * `T̄ = [Rᵀ_j X R_{j+1}; Sᵀ Zᵀ G_{j+1} R_{j+1}]`.
//!
//! Each wavelet is oriented so its last nonzero fine coefficient (in Morton
//! order) is positive. With the constant basis this reproduces the Haar
//! butterflies exactly, signs included.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hilbert::{basis_matrix, rank_reduce, BasisOrder, Hierarchy};
use crate::linalg::dense::{independent_columns, inverse_sqrt_factor};
use crate::linalg::{connected_components, Csr, UnionFind};
use crate::voxel::{OctreeLevels, VoxelCloud};

#[derive(Debug, Clone)]
struct OrthoBlock {
    /// Positions in the retained shift list.
    nodes: Vec<usize>,
    /// Coefficient indices produced by this block.
    cols: Vec<usize>,
    r: DMatrix<f64>,
}

#[derive(Debug, Clone)]
struct Ortho {
    blocks: Vec<OrthoBlock>,
    /// Block index of every retained node.
    block_of: Vec<usize>,
}

impl Ortho {
    fn build(gram: &Csr) -> Result<Self> {
        let mut blocks = Vec::new();
        let mut block_of = vec![0; gram.nrows()];
        let mut next_col = 0;
        for comp in connected_components(gram) {
            let g = gram.dense_block(&comp, &comp);
            let r = inverse_sqrt_factor(&g)?;
            let cols: Vec<usize> = (next_col..next_col + comp.len()).collect();
            next_col += comp.len();
            for &n in &comp {
                block_of[n] = blocks.len();
            }
            blocks.push(OrthoBlock { nodes: comp, cols, r });
        }
        Ok(Self { blocks, block_of })
    }

    fn identity(n: usize) -> Self {
        let blocks = (0..n)
            .map(|i| OrthoBlock { nodes: vec![i], cols: vec![i], r: DMatrix::identity(1, 1) })
            .collect();
        Self { blocks, block_of: (0..n).collect() }
    }

    /// Dense restriction to a set of nodes closed under blocks: returns the
    /// matrix and the coefficient columns, both following `nodes` order.
    fn restrict(&self, nodes: &[usize]) -> (DMatrix<f64>, Vec<usize>) {
        let pos: std::collections::HashMap<usize, usize> = nodes.iter().enumerate().map(|(p, &n)| (n, p)).collect();
        let mut seen = Vec::new();
        for &n in nodes {
            let b = self.block_of[n];
            if !seen.contains(&b) {
                seen.push(b);
            }
        }
        let mut m = DMatrix::zeros(nodes.len(), nodes.len());
        let mut cols = Vec::with_capacity(nodes.len());
        for b in seen {
            let blk = &self.blocks[b];
            let c0 = cols.len();
            cols.extend_from_slice(&blk.cols);
            for (a, &n) in blk.nodes.iter().enumerate() {
                let row = pos[&n];
                for c in 0..blk.cols.len() {
                    m[(row, c0 + c)] = blk.r[(a, c)];
                }
            }
        }
        (m, cols)
    }

    /// Spline coefficients `R F̄` on the retained nodes.
    fn apply(&self, fbar: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.block_of.len()];
        for blk in &self.blocks {
            for (a, &n) in blk.nodes.iter().enumerate() {
                out[n] = blk.cols.iter().enumerate().map(|(c, &col)| blk.r[(a, c)] * fbar[col]).sum();
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
struct StepComponent {
    /// Fine coefficient indices consumed.
    fine_cols: Vec<usize>,
    /// Coarse coefficient indices produced.
    coarse_cols: Vec<usize>,
    wavelet_start: usize,
    /// Square orthonormal analysis matrix.
    t: DMatrix<f64>,
    /// Fine retained nodes and wavelet synthesis `Z S` over them.
    fine_nodes: Vec<usize>,
    zs: DMatrix<f64>,
}

#[derive(Debug, Clone)]
struct Step {
    components: Vec<StepComponent>,
    num_wavelets: usize,
}

/// Orthonormal transform coefficients for one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct BvCoefficients {
    /// `F̄` at the start level.
    pub base: Vec<f64>,
    /// `Ḡ_j` for `j = start..top`.
    pub details: Vec<Vec<f64>>,
}

impl BvCoefficients {
    pub fn len(&self) -> usize {
        self.base.len() + self.details.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn energy(&self) -> f64 {
        self.base.iter().chain(self.details.iter().flatten()).map(|v| v * v).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.base.clone();
        for d in &self.details {
            out.extend_from_slice(d);
        }
        out
    }
}

/// Precomputed analysis/synthesis operators for one cloud geometry.
#[derive(Debug, Clone)]
pub struct BvTransform {
    hierarchy: Hierarchy,
    start: usize,
    /// Retained shift indices per level (empty below `start`).
    kept: Vec<Vec<usize>>,
    ortho: Vec<Option<Ortho>>,
    steps: Vec<Option<Step>>,
}

impl BvTransform {
    pub fn build(octree: &OctreeLevels, order: BasisOrder, start: usize) -> Result<Self> {
        let hierarchy = Hierarchy::build(octree, order)?;
        let top = hierarchy.top();
        if start > top {
            return Err(Error::LevelOutOfRange { level: start, max: top });
        }
        let mut kept = vec![Vec::new(); top + 1];
        let mut ortho: Vec<Option<Ortho>> = vec![None; top + 1];
        let mut reduced_gram: Vec<Option<Csr>> = vec![None; top + 1];
        for j in start..=top {
            let level = hierarchy.level(j);
            if j == top {
                kept[j] = (0..level.shifts.len()).collect();
                ortho[j] = Some(Ortho::identity(level.shifts.len()));
                reduced_gram[j] = Some(level.gram.clone());
            } else {
                kept[j] = rank_reduce(&level.gram, &level.shifts)?;
                let g = level.gram.select(&kept[j], &kept[j]);
                ortho[j] = Some(Ortho::build(&g)?);
                reduced_gram[j] = Some(g);
            }
        }
        let mut steps: Vec<Option<Step>> = vec![None; top];
        for j in start..top {
            let x = hierarchy.cross_gram(j)?.select(&kept[j], &kept[j + 1]);
            let gf = reduced_gram[j + 1].as_ref().unwrap();
            let gc = reduced_gram[j].as_ref().unwrap();
            steps[j] = Some(build_step(
                &x,
                gc,
                gf,
                ortho[j].as_ref().unwrap(),
                ortho[j + 1].as_ref().unwrap(),
            )?);
        }
        Ok(Self { hierarchy, start, kept, ortho, steps })
    }

    pub fn order(&self) -> BasisOrder {
        self.hierarchy.order()
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn top(&self) -> usize {
        self.hierarchy.top()
    }

    pub fn hierarchy(&self) -> &Hierarchy {
        &self.hierarchy
    }

    /// Retained shift indices at level `j`.
    pub fn kept(&self, j: usize) -> &[usize] {
        &self.kept[j]
    }

    /// Dimension of the approximation space at level `j`.
    pub fn dimension(&self, j: usize) -> usize {
        self.kept[j].len()
    }

    pub fn num_wavelets(&self, j: usize) -> usize {
        self.steps[j].as_ref().map_or(0, |s| s.num_wavelets)
    }

    pub fn num_points(&self) -> usize {
        self.hierarchy.num_points()
    }

    /// `F̄_j` from `F̄_{j+1}`, and `Ḡ_j`.
    pub fn analyze(&self, j: usize, fine: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let step = self.step(j)?;
        if fine.len() != self.kept[j + 1].len() {
            return Err(Error::LengthMismatch { expected: self.kept[j + 1].len(), actual: fine.len() });
        }
        let mut coarse = vec![0.0; self.kept[j].len()];
        let mut detail = vec![0.0; step.num_wavelets];
        for c in &step.components {
            let x = nalgebra::DVector::from_iterator(c.fine_cols.len(), c.fine_cols.iter().map(|&i| fine[i]));
            let y = &c.t * x;
            let nc = c.coarse_cols.len();
            for (k, &i) in c.coarse_cols.iter().enumerate() {
                coarse[i] = y[k];
            }
            for k in nc..y.len() {
                detail[c.wavelet_start + k - nc] = y[k];
            }
        }
        Ok((coarse, detail))
    }

    /// Inverse of [`analyze`](Self::analyze).
    pub fn synthesize(&self, j: usize, coarse: &[f64], detail: &[f64]) -> Result<Vec<f64>> {
        let step = self.step(j)?;
        if coarse.len() != self.kept[j].len() {
            return Err(Error::LengthMismatch { expected: self.kept[j].len(), actual: coarse.len() });
        }
        if detail.len() != step.num_wavelets {
            return Err(Error::LengthMismatch { expected: step.num_wavelets, actual: detail.len() });
        }
        let mut fine = vec![0.0; self.kept[j + 1].len()];
        for c in &step.components {
            let nc = c.coarse_cols.len();
            let n = c.fine_cols.len();
            let y = nalgebra::DVector::from_iterator(
                n,
                c.coarse_cols
                    .iter()
                    .map(|&i| coarse[i])
                    .chain((0..n - nc).map(|k| detail[c.wavelet_start + k])),
            );
            let x = c.t.tr_mul(&y);
            for (k, &i) in c.fine_cols.iter().enumerate() {
                fine[i] = x[k];
            }
        }
        Ok(fine)
    }

    fn step(&self, j: usize) -> Result<&Step> {
        self.steps
            .get(j)
            .and_then(Option::as_ref)
            .ok_or(Error::LevelOutOfRange { level: j, max: self.top() })
    }

    /// Full analysis cascade from the voxel values down to the start level.
    pub fn forward(&self, values: &[f64]) -> Result<BvCoefficients> {
        if values.len() != self.num_points() {
            return Err(Error::LengthMismatch { expected: self.num_points(), actual: values.len() });
        }
        let top = self.top();
        let mut cur = values.to_vec();
        let mut details = vec![Vec::new(); top - self.start];
        for j in (self.start..top).rev() {
            let (c, d) = self.analyze(j, &cur)?;
            details[j - self.start] = d;
            cur = c;
        }
        Ok(BvCoefficients { base: cur, details })
    }

    pub fn inverse(&self, coeffs: &BvCoefficients) -> Result<Vec<f64>> {
        let top = self.top();
        if coeffs.details.len() != top - self.start {
            return Err(Error::LengthMismatch { expected: top - self.start, actual: coeffs.details.len() });
        }
        let mut cur = coeffs.base.clone();
        for j in self.start..top {
            cur = self.synthesize(j, &cur, &coeffs.details[j - self.start])?;
        }
        Ok(cur)
    }

    /// Reconstruction with `Ḡ_j = 0` for every `j >= level`.
    pub fn smooth(&self, values: &[f64], level: usize) -> Result<Vec<f64>> {
        let mut c = self.forward(values)?;
        for (k, d) in c.details.iter_mut().enumerate() {
            if self.start + k >= level {
                d.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        self.inverse(&c)
    }

    /// Low-pass coefficients at level `j` (`start <= j <= top`) obtained by
    /// partial analysis.
    pub fn lowpass(&self, values: &[f64], j: usize) -> Result<Vec<f64>> {
        let mut cur = values.to_vec();
        for l in (j..self.top()).rev() {
            cur = self.analyze(l, &cur)?.0;
        }
        Ok(cur)
    }

    /// Spline coefficients on the full level-`j` shift set (zero at dropped
    /// shifts) for orthonormal coefficients `fbar`.
    pub fn spline_coefficients(&self, j: usize, fbar: &[f64]) -> Result<Vec<f64>> {
        let ortho = self.ortho[j].as_ref().ok_or(Error::LevelOutOfRange { level: j, max: self.top() })?;
        let local = ortho.apply(fbar);
        let mut full = vec![0.0; self.hierarchy.level(j).shifts.len()];
        for (&k, v) in self.kept[j].iter().zip(local) {
            full[k] = v;
        }
        Ok(full)
    }

    /// Wavelet functions of step `j` as coefficient columns over the full
    /// level-`j+1` shift set.
    pub fn wavelet_functions(&self, j: usize) -> Result<DMatrix<f64>> {
        let step = self.step(j)?;
        let nfine = self.hierarchy.level(j + 1).shifts.len();
        let mut m = DMatrix::zeros(nfine, step.num_wavelets);
        for c in &step.components {
            for (a, &node) in c.fine_nodes.iter().enumerate() {
                let row = self.kept[j + 1][node];
                for k in 0..c.zs.ncols() {
                    m[(row, c.wavelet_start + k)] = c.zs[(a, k)];
                }
            }
        }
        Ok(m)
    }

    /// Values of the level-`j` basis functions at the support points.
    pub fn basis_at_points(&self, j: usize, cloud: &VoxelCloud) -> Result<Csr> {
        basis_matrix(self.order(), j, &self.hierarchy.level(j).shifts, cloud)
    }

    /// Dense `N × N` analysis matrix of the full cascade. Intended for small
    /// clouds.
    pub fn assemble(&self) -> Result<DMatrix<f64>> {
        let n = self.num_points();
        let mut t = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for i in 0..n {
            e[i] = 1.0;
            let col = self.forward(&e)?.flatten();
            e[i] = 0.0;
            for (r, v) in col.into_iter().enumerate() {
                t[(r, i)] = v;
            }
        }
        Ok(t)
    }
}

fn build_step(x: &Csr, gc: &Csr, gf: &Csr, rc: &Ortho, rf: &Ortho) -> Result<Step> {
    let nc = x.nrows();
    let nf = x.ncols();
    let mut uf = UnionFind::new(nc + nf);
    for i in 0..nc {
        for &f in x.row(i).0 {
            uf.union(i, nc + f);
        }
        for &k in gc.row(i).0 {
            uf.union(i, k);
        }
    }
    for i in 0..nf {
        for &k in gf.row(i).0 {
            uf.union(nc + i, nc + k);
        }
    }
    for blk in &rc.blocks {
        for w in blk.nodes.windows(2) {
            uf.union(w[0], w[1]);
        }
    }
    for blk in &rf.blocks {
        for w in blk.nodes.windows(2) {
            uf.union(nc + w[0], nc + w[1]);
        }
    }
    let mut components = Vec::new();
    let mut wavelet_start = 0;
    for group in uf.groups() {
        let coarse: Vec<usize> = group.iter().copied().filter(|&g| g < nc).collect();
        let fine: Vec<usize> = group.iter().copied().filter(|&g| g >= nc).map(|g| g - nc).collect();
        if fine.len() < coarse.len() {
            return Err(Error::RankAccounting { expected: coarse.len(), actual: fine.len() });
        }
        let (rcm, coarse_cols) = rc.restrict(&coarse);
        let (rfm, fine_cols) = rf.restrict(&fine);
        let xc = x.dense_block(&coarse, &fine);
        let gfc = gf.dense_block(&fine, &fine);
        let top = rcm.transpose() * &xc * &rfm;
        let nw = fine.len() - coarse.len();
        let zs = if nw > 0 {
            let z = null_basis(&xc)?;
            let m = z.transpose() * &gfc * &z;
            let s = inverse_sqrt_factor(&m)?;
            let mut zs = z * s;
            orient_last_positive(&mut zs);
            zs
        } else {
            if !coarse.is_empty() {
                let sel = independent_columns(&xc, coarse.len());
                if sel.len() != coarse.len() {
                    return Err(Error::RankAccounting { expected: coarse.len(), actual: sel.len() });
                }
            }
            DMatrix::zeros(fine.len(), 0)
        };
        let bottom = zs.transpose() * &gfc * &rfm;
        let mut t = DMatrix::zeros(fine.len(), fine.len());
        t.view_mut((0, 0), (coarse.len(), fine.len())).copy_from(&top);
        t.view_mut((coarse.len(), 0), (nw, fine.len())).copy_from(&bottom);
        components.push(StepComponent { fine_cols, coarse_cols, wavelet_start, t, fine_nodes: fine, zs });
        wavelet_start += nw;
    }
    Ok(Step { components, num_wavelets: wavelet_start })
}

/// Orthonormal basis of the null space of a full-row-rank `x`, from a
/// Householder QR of `[xᵀ | I]`.
pub fn null_basis(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (r, n) = x.shape();
    if r > n {
        return Err(Error::RankAccounting { expected: 0, actual: n.saturating_sub(r) });
    }
    let mut aug = DMatrix::zeros(n, r + n);
    aug.view_mut((0, 0), (n, r)).copy_from(&x.transpose());
    aug.view_mut((0, r), (n, n)).copy_from(&DMatrix::identity(n, n));
    let qr = aug.qr();
    let rr = qr.r();
    let scale = x.abs().max().max(f64::MIN_POSITIVE);
    for i in 0..r {
        if rr[(i, i)].abs() <= 1e-12 * scale {
            return Err(Error::RankAccounting { expected: n - r, actual: n - i });
        }
    }
    let q = qr.q();
    Ok(q.columns(r, n - r).into_owned())
}

/// Flips each column so its last significant entry is positive.
fn orient_last_positive(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let amax = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if let Some(last) = col.iter().rposition(|v| v.abs() > 1e-9 * amax) {
            if col[last] < 0.0 {
                col.neg_mut();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raht::raht_forward;
    use rand::{Rng, SeedableRng};

    fn random_cloud(seed: u64, n: usize, d: u8) -> VoxelCloud {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = 1u32 << d;
        let pos: Vec<[u32; 3]> = (0..n).map(|_| [rng.gen_range(0..m), rng.gen_range(0..m), rng.gen_range(0..m)]).collect();
        let attrs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..255.0)).collect();
        VoxelCloud::from_unsorted(d, pos, 1, attrs, None).unwrap()
    }

    /// Points clustered on a thin slab so that coarse levels are rank
    /// deficient and fine levels sparse.
    fn slab_cloud(seed: u64, n: usize, d: u8) -> VoxelCloud {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = 1u32 << d;
        let pos: Vec<[u32; 3]> = (0..n)
            .map(|_| [rng.gen_range(0..m), rng.gen_range(0..m), rng.gen_range(m / 2..m / 2 + 2)])
            .collect();
        let attrs: Vec<f64> = pos.iter().map(|p| (p[0] as f64 * 0.3).sin() * 50.0 + p[1] as f64).collect();
        VoxelCloud::from_unsorted(d, pos, 1, attrs, None).unwrap()
    }

    #[test]
    fn null_basis_annihilates() {
        let x = DMatrix::from_row_slice(2, 4, &[1.0, 0.5, 0.0, 0.25, 0.0, 0.5, 1.0, 0.25]);
        let z = null_basis(&x).unwrap();
        assert_eq!(z.ncols(), 2);
        assert!((&x * &z).abs().max() < 1e-14);
        assert!((z.transpose() * &z - DMatrix::identity(2, 2)).abs().max() < 1e-14);
        let dep = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(matches!(null_basis(&dep), Err(Error::RankAccounting { .. })));
    }

    #[test]
    fn constant_order_matches_raht() {
        for seed in 0..15 {
            let cloud = random_cloud(seed, 1 + (seed as usize * 13) % 90, 3);
            let oct = OctreeLevels::build(&cloud).unwrap();
            let f = cloud.channel(0);
            let t = BvTransform::build(&oct, BasisOrder::Constant, 0).unwrap();
            let bv = t.forward(&f).unwrap();
            let raht = raht_forward(&oct, &f).unwrap();
            assert_eq!(bv.base.len(), 1);
            assert!((bv.base[0] - raht.dc).abs() < 1e-8);
            for (a, b) in bv.details.iter().zip(&raht.highpass) {
                assert_eq!(a.len(), b.len());
                for (x, y) in a.iter().zip(b) {
                    assert!((x - y).abs() < 1e-8, "seed {seed}: {x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn trilinear_roundtrip_and_parseval() {
        for seed in 0..10 {
            let cloud = if seed % 2 == 0 { random_cloud(seed, 20 + seed as usize * 15, 4) } else { slab_cloud(seed, 60, 4) };
            let oct = OctreeLevels::build(&cloud).unwrap();
            let f = cloud.channel(0);
            let t = BvTransform::build(&oct, BasisOrder::Trilinear, 0).unwrap();
            let c = t.forward(&f).unwrap();
            assert_eq!(c.len(), cloud.len());
            let e: f64 = f.iter().map(|v| v * v).sum();
            assert!((c.energy() - e).abs() < 1e-7 * e);
            let back = t.inverse(&c).unwrap();
            for (a, b) in back.iter().zip(&f) {
                assert!((a - b).abs() < 1e-8);
            }
            let m = t.assemble().unwrap();
            let id = m.transpose() * &m;
            assert!((id - DMatrix::identity(cloud.len(), cloud.len())).abs().max() < 1e-8);
        }
    }

    #[test]
    fn constant_field_has_no_details() {
        let base = slab_cloud(3, 80, 4);
        let n = base.len();
        let cloud = base.with_attributes(1, vec![42.0; n]).unwrap();
        let oct = OctreeLevels::build(&cloud).unwrap();
        let t = BvTransform::build(&oct, BasisOrder::Trilinear, 0).unwrap();
        let c = t.forward(&cloud.channel(0)).unwrap();
        for d in &c.details {
            assert!(d.iter().all(|v| v.abs() < 1e-8));
        }
    }

    #[test]
    fn wavelets_orthogonal_to_coarse_basis() {
        for seed in 0..6 {
            let cloud = slab_cloud(40 + seed, 50 + 10 * seed as usize, 4);
            let oct = OctreeLevels::build(&cloud).unwrap();
            let t = BvTransform::build(&oct, BasisOrder::Trilinear, 0).unwrap();
            for j in 0..t.top() {
                let psi = t.wavelet_functions(j).unwrap();
                let phi1 = t.basis_at_points(j + 1, &cloud).unwrap().to_dense();
                let phi0 = t.basis_at_points(j, &cloud).unwrap().to_dense();
                let psi_vals = &phi1 * &psi;
                let ip = phi0.transpose() * &psi_vals;
                assert!(ip.abs().max() <= 1e-8, "level {j}");
                assert_eq!(psi.ncols(), t.dimension(j + 1) - t.dimension(j));
                let gram = psi_vals.transpose() * &psi_vals;
                assert!((gram - DMatrix::identity(psi.ncols(), psi.ncols())).abs().max() < 1e-8);
            }
        }
    }

    #[test]
    fn smoothing_equals_projection_and_spline_samples() {
        for seed in 0..5 {
            let cloud = slab_cloud(70 + seed, 70, 4);
            let oct = OctreeLevels::build(&cloud).unwrap();
            let f = cloud.channel(0);
            let t = BvTransform::build(&oct, BasisOrder::Trilinear, 0).unwrap();
            for level in 0..=t.top() {
                let s = t.smooth(&f, level).unwrap();
                let (p, fitted) = crate::hilbert::project_cloud(t.hierarchy(), &cloud, level).unwrap();
                assert_eq!(p.rank(), t.dimension(level));
                for (a, b) in s.iter().zip(&fitted[0]) {
                    assert!((a - b).abs() < 1e-8, "seed {seed} level {level}: {a} vs {b}");
                }
                let low = t.lowpass(&f, level).unwrap();
                let coeffs = t.spline_coefficients(level, &low).unwrap();
                let phi = t.basis_at_points(level, &cloud).unwrap();
                let vals = phi.matvec(&coeffs);
                for (a, b) in vals.iter().zip(&s) {
                    assert!((a - b).abs() < 1e-8);
                }
            }
            let id = t.smooth(&f, t.top()).unwrap();
            assert!(id.iter().zip(&f).all(|(a, b)| (a - b).abs() < 1e-8));
        }
    }

    #[test]
    fn single_point_and_nonzero_start() {
        let cloud = VoxelCloud::new(3, vec![[5, 2, 7]], 1, vec![9.0], None).unwrap();
        let oct = OctreeLevels::build(&cloud).unwrap();
        let t = BvTransform::build(&oct, BasisOrder::Trilinear, 0).unwrap();
        let c = t.forward(&[9.0]).unwrap();
        assert_eq!(c.base.len(), 1);
        assert!((c.base[0].abs() - 9.0).abs() < 1e-12);
        let cloud = random_cloud(5, 40, 3);
        let oct = OctreeLevels::build(&cloud).unwrap();
        let t = BvTransform::build(&oct, BasisOrder::Trilinear, 2).unwrap();
        let f = cloud.channel(0);
        let c = t.forward(&f).unwrap();
        assert_eq!(c.details.len(), 1);
        assert_eq!(c.len(), cloud.len());
        assert!(t.inverse(&c).unwrap().iter().zip(&f).all(|(a, b)| (a - b).abs() < 1e-8));
        assert!(BvTransform::build(&oct, BasisOrder::Trilinear, 9).is_err());
    }
}
