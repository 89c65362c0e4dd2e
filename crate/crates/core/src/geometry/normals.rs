//! Normal estimation: principal axes of k-nearest-neighbour covariances,
//! oriented consistently along a minimum spanning tree of the k-NN graph.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{Error, Result};
use crate::spatial::{to_i64, GridIndex};
use crate::voxel::VoxelCloud;

pub const DEFAULT_NEIGHBORS: usize = 12;

#[derive(Debug, Clone)]
pub struct NormalEstimate {
    pub normals: Vec<[f64; 3]>,
    /// Points whose neighbourhood was collinear or coincident; their normal
    /// is the coordinate axis of least spread.
    pub degenerate: Vec<bool>,
}

impl NormalEstimate {
    pub fn num_degenerate(&self) -> usize {
        self.degenerate.iter().filter(|&&d| d).count()
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn estimate_normals(cloud: &VoxelCloud, k: usize) -> Result<NormalEstimate> {
    let n = cloud.len();
    if k < 3 || n < k {
        return Err(Error::InvalidParameter(format!("need 3 <= k <= N, got k={k}, N={n}")));
    }
    let pts = cloud.positions();
    let index = GridIndex::new(pts);
    let mut normals = Vec::with_capacity(n);
    let mut degenerate = Vec::with_capacity(n);
    let mut graph: Vec<Vec<usize>> = Vec::with_capacity(n);

    for &p in pts {
        let nbrs = index.k_nearest(to_i64(p), k);
        let mut mean = [0.0; 3];
        for &(_, j) in &nbrs {
            for a in 0..3 {
                mean[a] += pts[j][a] as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nbrs.len() as f64);
        let mut cov: Matrix3<f64> = Matrix3::zeros();
        for &(_, j) in &nbrs {
            let d = [pts[j][0] as f64 - mean[0], pts[j][1] as f64 - mean[1], pts[j][2] as f64 - mean[2]];
            for r in 0..3 {
                for c in 0..3 {
                    cov[(r, c)] += d[r] * d[c];
                }
            }
        }
        let eig = SymmetricEigen::new(cov);
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let (l1, l2) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
        if l1 <= 1e-9 * l2.max(1e-300) {
            let axis = (0..3).min_by(|&a, &b| cov[(a, a)].total_cmp(&cov[(b, b)])).unwrap();
            let mut v = [0.0; 3];
            v[axis] = 1.0;
            normals.push(v);
            degenerate.push(true);
        } else {
            let e = eig.eigenvectors.column(order[0]);
            let len = e.norm();
            normals.push([e[0] / len, e[1] / len, e[2] / len]);
            degenerate.push(false);
        }
        graph.push(nbrs.iter().map(|&(_, j)| j).collect());
    }

    // Symmetrise the neighbour graph.
    let mut adj = graph.clone();
    for (i, nb) in graph.iter().enumerate() {
        for &j in nb {
            adj[j].push(i);
        }
    }
    for a in adj.iter_mut() {
        a.sort_unstable();
        a.dedup();
    }
    orient(pts, &mut normals, &adj);
    Ok(NormalEstimate { normals, degenerate })
}

/// Prim's algorithm with edge cost `1 - |n_i . n_j|`; each tree is seeded at
/// its point farthest from the centroid, pointing away from the centroid.
fn orient(pts: &[[u32; 3]], normals: &mut [[f64; 3]], adj: &[Vec<usize>]) {
    let n = pts.len();
    let mut centroid = [0.0; 3];
    for p in pts {
        for a in 0..3 {
            centroid[a] += p[a] as f64 / n as f64;
        }
    }
    let offset = |i: usize| {
        [pts[i][0] as f64 - centroid[0], pts[i][1] as f64 - centroid[1], pts[i][2] as f64 - centroid[2]]
    };
    let mut by_dist: Vec<usize> = (0..n).collect();
    by_dist.sort_by(|&a, &b| dot(offset(b), offset(b)).total_cmp(&dot(offset(a), offset(a))).then(a.cmp(&b)));

    let mut done = vec![false; n];
    for &seed in &by_dist {
        if done[seed] {
            continue;
        }
        if dot(normals[seed], offset(seed)) < 0.0 {
            normals[seed] = normals[seed].map(|v| -v);
        }
        let mut heap = BinaryHeap::new();
        heap.push(Reverse((0u64, seed, seed)));
        while let Some(Reverse((_, i, from))) = heap.pop() {
            if done[i] {
                continue;
            }
            done[i] = true;
            if i != from && dot(normals[i], normals[from]) < 0.0 {
                normals[i] = normals[i].map(|v| -v);
            }
            for &j in &adj[i] {
                if !done[j] {
                    let w = 1.0 - dot(normals[i], normals[j]).abs();
                    heap.push(Reverse((w.max(0.0).to_bits(), j, i)));
                }
            }
        }
    }
}

/// The cloud itself when it already carries normals, otherwise a copy with
/// estimated ones.
pub fn ensure_normals(cloud: &VoxelCloud, k: usize) -> Result<VoxelCloud> {
    if cloud.normals().is_some() {
        return Ok(cloud.clone());
    }
    let k = k.min(cloud.len());
    if k < 3 {
        // Too few points for a covariance: point away from the centroid.
        let n = cloud.len() as f64;
        let mut c = [0.0; 3];
        for p in cloud.positions() {
            for a in 0..3 {
                c[a] += p[a] as f64 / n;
            }
        }
        let normals = cloud
            .positions()
            .iter()
            .map(|p| {
                let d = [p[0] as f64 - c[0], p[1] as f64 - c[1], p[2] as f64 - c[2]];
                let len = dot(d, d).sqrt();
                if len > 1e-12 {
                    d.map(|v| v / len)
                } else {
                    [0.0, 0.0, 1.0]
                }
            })
            .collect();
        return cloud.clone().with_normals(normals);
    }
    let est = estimate_normals(cloud, k)?;
    cloud.clone().with_normals(est.normals)
}
