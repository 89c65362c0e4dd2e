use crate::error::{Error, Result};

/// Compressed sparse row matrix with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl Csr {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, mut trips: Vec<(usize, usize, f64)>) -> Self {
        trips.sort_unstable_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(trips.len());
        let mut data = Vec::with_capacity(trips.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trips {
            debug_assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        Self { nrows, ncols, indptr, indices, data }
    }

    pub fn identity(n: usize) -> Self {
        Self { nrows: n, ncols: n, indptr: (0..=n).collect(), indices: (0..n).collect(), data: vec![1.0; n] }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.data[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (idx, val) = self.row(i);
        idx.binary_search(&j).map_or(0.0, |p| val[p])
    }

    pub fn transpose(&self) -> Csr {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for i in 0..self.ncols {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut indices = vec![0; self.nnz()];
        let mut data = vec![0.0; self.nnz()];
        for r in 0..self.nrows {
            let (idx, val) = self.row(r);
            for (&c, &v) in idx.iter().zip(val) {
                indices[next[c]] = r;
                data[next[c]] = v;
                next[c] += 1;
            }
        }
        Csr { nrows: self.ncols, ncols: self.nrows, indptr: counts, indices, data }
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &Csr) -> Csr {
        assert_eq!(self.ncols, other.nrows, "dimension mismatch");
        let mut acc = vec![0.0; other.ncols];
        let mut seen = vec![usize::MAX; other.ncols];
        let mut touched = Vec::new();
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for i in 0..self.nrows {
            touched.clear();
            let (ai, av) = self.row(i);
            for (&k, &a) in ai.iter().zip(av) {
                let (bi, bv) = other.row(k);
                for (&j, &b) in bi.iter().zip(bv) {
                    if seen[j] != i {
                        seen[j] = i;
                        acc[j] = 0.0;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                indices.push(j);
                data.push(acc[j]);
            }
            indptr.push(indices.len());
        }
        Csr { nrows: self.nrows, ncols: other.ncols, indptr, indices, data }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| {
                let (idx, val) = self.row(i);
                idx.iter().zip(val).map(|(&j, &v)| v * x[j]).sum()
            })
            .collect()
    }

    /// `self^T x`.
    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            let (idx, val) = self.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                y[j] += v * xi;
            }
        }
        y
    }

    /// Dense copy of the submatrix selected by `rows` and `cols`.
    pub fn dense_block(&self, rows: &[usize], cols: &[usize]) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(rows.len(), cols.len());
        for (a, &r) in rows.iter().enumerate() {
            let (idx, val) = self.row(r);
            for (b, &c) in cols.iter().enumerate() {
                if let Ok(p) = idx.binary_search(&c) {
                    m[(a, b)] = val[p];
                }
            }
        }
        m
    }

    /// Sparse submatrix selected by `rows` and `cols` (both sorted ascending
    /// is not required).
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Csr {
        let mut colmap = vec![usize::MAX; self.ncols];
        for (b, &c) in cols.iter().enumerate() {
            colmap[c] = b;
        }
        let mut trips = Vec::new();
        for (a, &r) in rows.iter().enumerate() {
            let (idx, val) = self.row(r);
            for (&c, &v) in idx.iter().zip(val) {
                if colmap[c] != usize::MAX {
                    trips.push((a, colmap[c], v));
                }
            }
        }
        Csr::from_triplets(rows.len(), cols.len(), trips)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (idx, val) = self.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }
}

/// Disjoint-set forest with path halving and union by index.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    pub fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Keep the smaller index as root so labels are order-stable.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }

    /// Groups of members, each ascending, ordered by their smallest member.
    pub fn groups(&mut self) -> Vec<Vec<usize>> {
        let n = self.parent.len();
        let mut slot = vec![usize::MAX; n];
        let mut out: Vec<Vec<usize>> = Vec::new();
        for i in 0..n {
            let r = self.find(i);
            if slot[r] == usize::MAX {
                slot[r] = out.len();
                out.push(Vec::new());
            }
            out[slot[r]].push(i);
        }
        out
    }
}

/// Connected components of the nonzero pattern of a square matrix.
pub fn connected_components(a: &Csr) -> Vec<Vec<usize>> {
    let mut uf = UnionFind::new(a.nrows());
    for i in 0..a.nrows() {
        for &j in a.row(i).0 {
            uf.union(i, j);
        }
    }
    uf.groups()
}

/// Geometric nested-dissection ordering for points on an integer lattice
/// whose coupling reaches at most one lattice step per axis.
pub fn nested_dissection(points: &[[u32; 3]]) -> Vec<usize> {
    fn rec(points: &[[u32; 3]], idx: Vec<usize>, out: &mut Vec<usize>) {
        if idx.len() <= 64 {
            let mut idx = idx;
            idx.sort_unstable();
            out.extend(idx);
            return;
        }
        let mut lo = [u32::MAX; 3];
        let mut hi = [0u32; 3];
        for &i in &idx {
            for a in 0..3 {
                lo[a] = lo[a].min(points[i][a]);
                hi[a] = hi[a].max(points[i][a]);
            }
        }
        let axis = (0..3).max_by_key(|&a| (hi[a] - lo[a], 3 - a)).unwrap();
        if hi[axis] - lo[axis] < 2 {
            let mut idx = idx;
            idx.sort_unstable();
            out.extend(idx);
            return;
        }
        let mut coords: Vec<u32> = idx.iter().map(|&i| points[i][axis]).collect();
        coords.sort_unstable();
        let s = coords[coords.len() / 2].clamp(lo[axis] + 1, hi[axis] - 1);
        let (mut left, mut sep, mut right) = (Vec::new(), Vec::new(), Vec::new());
        for i in idx {
            match points[i][axis].cmp(&s) {
                std::cmp::Ordering::Less => left.push(i),
                std::cmp::Ordering::Equal => sep.push(i),
                std::cmp::Ordering::Greater => right.push(i),
            }
        }
        rec(points, left, out);
        rec(points, right, out);
        sep.sort_unstable();
        out.extend(sep);
    }
    let mut out = Vec::with_capacity(points.len());
    rec(points, (0..points.len()).collect(), &mut out);
    out
}

/// Up-looking sparse Cholesky of a symmetric positive semi-definite matrix
/// that drops (treats as absent) every row whose Schur pivot falls below
/// `rel_tol` times its diagonal.
#[derive(Debug, Clone)]
pub struct SparseCholesky {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    /// Columns of `L` in the permuted ordering; first entry is the diagonal.
    cols: Vec<Vec<(usize, f64)>>,
    dropped: Vec<bool>,
}

impl SparseCholesky {
    /// `a` must be square, symmetric and store both triangles.
    pub fn factor(a: &Csr, perm: &[usize], rel_tol: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || perm.len() != n {
            return Err(Error::LengthMismatch { expected: n, actual: perm.len() });
        }
        let mut pinv = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            pinv[old] = new;
        }
        // Upper triangle of P A P^T by columns: entries (i, k) with i < k.
        let mut upper: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut diag = vec![0.0; n];
        for k in 0..n {
            let (idx, val) = a.row(perm[k]);
            for (&j, &v) in idx.iter().zip(val) {
                let i = pinv[j];
                if i < k {
                    upper[k].push((i, v));
                } else if i == k {
                    diag[k] += v;
                }
            }
        }
        // Elimination tree.
        let mut parent = vec![usize::MAX; n];
        let mut ancestor = vec![usize::MAX; n];
        for k in 0..n {
            for &(mut i, _) in &upper[k] {
                while i != usize::MAX && i < k {
                    let next = ancestor[i];
                    ancestor[i] = k;
                    if next == usize::MAX {
                        parent[i] = k;
                    }
                    i = next;
                }
            }
        }
        // Absolute floor for round-off in rows with tiny diagonals.
        let floor = diag.iter().fold(0.0f64, |a, v| a.max(v.abs())) * 1e-13 + f64::MIN_POSITIVE;
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut dropped = vec![false; n];
        let mut x = vec![0.0; n];
        let mut mark = vec![usize::MAX; n];
        let mut stack = vec![0usize; n];
        let mut path = Vec::new();
        for k in 0..n {
            // Pattern of row k in topological order.
            let mut top = n;
            mark[k] = k;
            for &(i, v) in &upper[k] {
                x[i] += v;
                let mut i = i;
                path.clear();
                while mark[i] != k {
                    path.push(i);
                    mark[i] = k;
                    i = parent[i];
                    if i == usize::MAX {
                        break;
                    }
                }
                while let Some(p) = path.pop() {
                    top -= 1;
                    stack[top] = p;
                }
            }
            let mut d = diag[k];
            for &i in &stack[top..n] {
                let xi = x[i];
                x[i] = 0.0;
                if dropped[i] {
                    continue;
                }
                let lii = cols[i][0].1;
                let lki = xi / lii;
                for &(r, v) in &cols[i][1..] {
                    x[r] -= v * lki;
                }
                d -= lki * lki;
                if lki != 0.0 {
                    cols[i].push((k, lki));
                }
            }
            if d <= rel_tol * diag[k].abs() + floor {
                dropped[k] = true;
                cols[k].push((k, 1.0));
            } else {
                cols[k].push((k, d.sqrt()));
            }
        }
        Ok(Self { n, perm: perm.to_vec(), cols, dropped })
    }

    /// Original indices of retained rows, ascending.
    pub fn kept(&self) -> Vec<usize> {
        let mut k: Vec<usize> = (0..self.n).filter(|&i| !self.dropped[i]).map(|i| self.perm[i]).collect();
        k.sort_unstable();
        k
    }

    pub fn rank(&self) -> usize {
        self.dropped.iter().filter(|&&d| !d).count()
    }

    /// Solves the retained subsystem; dropped unknowns are returned as zero.
    /// `b` and the result use original indexing.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = (0..n).map(|k| b[self.perm[k]]).collect();
        for j in 0..n {
            if self.dropped[j] {
                y[j] = 0.0;
                continue;
            }
            let col = &self.cols[j];
            y[j] /= col[0].1;
            let yj = y[j];
            for &(i, v) in &col[1..] {
                y[i] -= v * yj;
            }
        }
        for j in (0..n).rev() {
            if self.dropped[j] {
                y[j] = 0.0;
                continue;
            }
            let col = &self.cols[j];
            let mut s = y[j];
            for &(i, v) in &col[1..] {
                s -= v * y[i];
            }
            y[j] = s / col[0].1;
        }
        let mut out = vec![0.0; n];
        for k in 0..n {
            out[self.perm[k]] = y[k];
        }
        out
    }
}

/// Jacobi-preconditioned conjugate gradients. Returns the solution and the
/// iteration count.
pub fn conjugate_gradient(a: &Csr, b: &[f64], rel_tol: f64, max_iter: usize) -> Result<(Vec<f64>, usize)> {
    let n = b.len();
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for it in 0..max_iter {
        let ap = a.matvec(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::NumericalRank("conjugate gradient breakdown".into()));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm <= rel_tol * bnorm {
            return Ok((x, it + 1));
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NumericalRank(format!("conjugate gradient did not converge in {max_iter} iterations")))
}
