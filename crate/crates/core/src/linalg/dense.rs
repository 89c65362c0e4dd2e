use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Flips each column so its largest-magnitude entry is positive (the first
/// one on near ties).
pub fn canonical_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let amax = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if amax == 0.0 {
            continue;
        }
        let lead = col.iter().position(|v| v.abs() >= amax * (1.0 - 1e-9)).unwrap();
        if col[lead] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues in
/// descending order and canonical eigenvector signs.
pub fn symmetric_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap().then(a.cmp(&b)));
    let vals = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    canonical_signs(&mut vecs);
    (vals, vecs)
}

/// `U Λ^{-1/2}` for a symmetric positive definite `g`, so that
/// `Rᵀ g R = I`.
pub fn inverse_sqrt_factor(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (vals, mut vecs) = symmetric_eigen(g);
    let top = vals.iter().fold(0.0f64, |a, &v| a.max(v));
    for (c, &v) in vals.iter().enumerate() {
        if !(v > 1e-13 * top.max(f64::MIN_POSITIVE)) {
            return Err(Error::NumericalRank(format!("Gram block not positive definite (eigenvalue {v:e}, max {top:e})")));
        }
        vecs.column_mut(c).scale_mut(1.0 / v.sqrt());
    }
    Ok(vecs)
}

/// Greedy in-order selection of linearly independent columns. A column is
/// taken when its residual against the already chosen ones keeps at least
/// `rel_tol` of its norm. A strict pass is made first, then a lenient one
/// over the remaining columns until `target` columns are found.
pub fn independent_columns(x: &DMatrix<f64>, target: usize) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut chosen = vec![false; x.ncols()];
    for tol in [1e-2, 1e-6, 1e-10] {
        for j in 0..x.ncols() {
            if basis.len() == target {
                break;
            }
            if chosen[j] {
                continue;
            }
            let col = x.column(j).into_owned();
            let norm = col.norm();
            if norm == 0.0 {
                continue;
            }
            let mut r = col;
            for _ in 0..2 {
                for q in &basis {
                    let c = q.dot(&r);
                    r.axpy(-c, q, 1.0);
                }
            }
            let rn = r.norm();
            if rn > tol * norm {
                basis.push(r / rn);
                chosen[j] = true;
            }
        }
    }
    (0..x.ncols()).filter(|&j| chosen[j]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_sqrt_whitens() {
        let g = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let r = inverse_sqrt_factor(&g).unwrap();
        let i = r.transpose() * &g * &r;
        assert!((i - DMatrix::identity(3, 3)).abs().max() < 1e-12);
        assert!(inverse_sqrt_factor(&DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0])).is_err());
    }

    #[test]
    fn sign_rule() {
        let mut m = DMatrix::from_row_slice(2, 2, &[0.1, 0.5, -0.9, -0.5]);
        canonical_signs(&mut m);
        assert_eq!(m[(1, 0)], 0.9);
        assert_eq!(m[(0, 1)], 0.5);
    }

    #[test]
    fn independent_columns_in_order() {
        let x = DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 0.0, 1.0, 0.0, 0.0, 3.0, 1.0]);
        assert_eq!(independent_columns(&x, 2), vec![0, 2]);
        let z = DMatrix::from_row_slice(1, 3, &[0.0, 5.0, 1.0]);
        assert_eq!(independent_columns(&z, 1), vec![1]);
    }
}

/// Rank-revealing Cholesky with diagonal pivoting. Returns the retained
/// indices (ascending); pivoting stops once every remaining Schur diagonal
/// is below `rel_tol` times its original diagonal plus a small absolute
/// floor.
pub fn pivoted_cholesky_keep(g: &DMatrix<f64>, rel_tol: f64) -> Vec<usize> {
    let n = g.nrows();
    let orig: Vec<f64> = (0..n).map(|i| g[(i, i)]).collect();
    let floor = orig.iter().fold(0.0f64, |a, v| a.max(v.abs())) * 1e-13 + f64::MIN_POSITIVE;
    let mut schur: Vec<f64> = orig.clone();
    let mut l: Vec<Vec<f64>> = Vec::new();
    let mut done = vec![false; n];
    let mut kept = Vec::new();
    loop {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if done[i] || schur[i] <= rel_tol * orig[i].abs() + floor {
                continue;
            }
            let score = schur[i] / orig[i].abs().max(f64::MIN_POSITIVE);
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((i, score));
            }
        }
        let Some((p, _)) = best else { break };
        done[p] = true;
        kept.push(p);
        let piv = schur[p].sqrt();
        let mut col = vec![0.0; n];
        for i in 0..n {
            if done[i] && i != p {
                continue;
            }
            let mut v = g[(i, p)];
            for prev in &l {
                v -= prev[i] * prev[p];
            }
            col[i] = v / piv;
        }
        for i in 0..n {
            if !done[i] {
                schur[i] -= col[i] * col[i];
            }
        }
        l.push(col);
    }
    kept.sort_unstable();
    kept
}

#[cfg(test)]
mod pivot_tests {
    use super::*;

    #[test]
    fn pivoted_rank_of_low_rank_product() {
        let b = DMatrix::from_fn(4, 9, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let g = b.transpose() * &b;
        let kept = pivoted_cholesky_keep(&g, 1e-9);
        let rank = b.clone().svd(false, false).singular_values.iter().filter(|&&s| s > 1e-9).count();
        assert_eq!(kept.len(), rank);
        let sub = DMatrix::from_fn(kept.len(), kept.len(), |a, c| g[(kept[a], kept[c])]);
        assert!(sub.cholesky().is_some());
    }
}
