//! Exact nearest-neighbour queries on integer voxel positions via a uniform
//! grid of buckets.

use std::collections::HashMap;

use crate::voxel::Voxel;

pub struct GridIndex {
    points: Vec<Voxel>,
    shift: u32,
    cells: HashMap<[i64; 3], Vec<u32>>,
    /// Cell-space bounding box of the occupied cells.
    lo: [i64; 3],
    hi: [i64; 3],
}

fn dist2(a: [i64; 3], b: Voxel) -> i64 {
    let d = [a[0] - b[0] as i64, a[1] - b[1] as i64, a[2] - b[2] as i64];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

impl GridIndex {
    /// Picks a bucket size so a surface-like cloud holds a few dozen points
    /// per bucket.
    pub fn new(points: &[Voxel]) -> Self {
        let mut extent = 1u64;
        for p in points {
            for &c in p {
                extent = extent.max(c as u64 + 1);
            }
        }
        let n = points.len().max(1) as f64;
        let ideal = ((128.0 * (extent as f64).powi(2)) / n).sqrt().max(1.0);
        let shift = (ideal.log2().floor() as u32).min(20);
        Self::with_shift(points, shift)
    }

    pub fn with_shift(points: &[Voxel], shift: u32) -> Self {
        let mut cells: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for (i, p) in points.iter().enumerate() {
            let c = [(p[0] >> shift) as i64, (p[1] >> shift) as i64, (p[2] >> shift) as i64];
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
            cells.entry(c).or_default().push(i as u32);
        }
        Self { points: points.to_vec(), shift, cells, lo, hi }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> Voxel {
        self.points[i]
    }

    fn cell_of(&self, q: [i64; 3]) -> [i64; 3] {
        [q[0] >> self.shift, q[1] >> self.shift, q[2] >> self.shift]
    }

    /// Largest ring that can still hold points.
    fn max_ring(&self, c: [i64; 3]) -> i64 {
        (0..3)
            .map(|a| (c[a] - self.lo[a]).abs().max((self.hi[a] - c[a]).abs()))
            .max()
            .unwrap_or(0)
    }

    fn visit_ring(&self, c: [i64; 3], r: i64, mut f: impl FnMut(u32)) {
        for dx in -r..=r {
            for dy in -r..=r {
                let edge = dx.abs() == r || dy.abs() == r;
                // Inside the ring's xy square only the two z caps are new.
                let step = if edge || r == 0 { 1 } else { 2 * r as usize };
                for dz in (-r..=r).step_by(step) {
                    if let Some(list) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        list.iter().for_each(|&i| f(i));
                    }
                }
            }
        }
    }

    /// Index and squared distance of the nearest point; ties go to the
    /// lowest index.
    pub fn nearest(&self, q: [i64; 3]) -> Option<(usize, i64)> {
        if self.points.is_empty() {
            return None;
        }
        let c = self.cell_of(q);
        let cell = 1i64 << self.shift;
        let mut best: Option<(i64, u32)> = None;
        let max_r = self.max_ring(c);
        for r in 0..=max_r {
            self.visit_ring(c, r, |i| {
                let d = dist2(q, self.points[i as usize]);
                if best.is_none_or(|b| (d, i) < b) {
                    best = Some((d, i));
                }
            });
            if let Some((d, _)) = best {
                if d < (r * cell) * (r * cell) {
                    break;
                }
            }
        }
        best.map(|(d, i)| (i as usize, d))
    }

    /// The `k` nearest points as `(squared distance, index)`, ascending.
    pub fn k_nearest(&self, q: [i64; 3], k: usize) -> Vec<(i64, usize)> {
        let c = self.cell_of(q);
        let cell = 1i64 << self.shift;
        let mut found: Vec<(i64, usize)> = Vec::new();
        let max_r = self.max_ring(c);
        for r in 0..=max_r {
            self.visit_ring(c, r, |i| found.push((dist2(q, self.points[i as usize]), i as usize)));
            if found.len() >= k {
                found.sort_unstable();
                found.truncate(k);
                if found[k - 1].0 < (r * cell) * (r * cell) {
                    break;
                }
            }
        }
        found.sort_unstable();
        found.truncate(k);
        found
    }
}

pub fn to_i64(v: Voxel) -> [i64; 3] {
    [v[0] as i64, v[1] as i64, v[2] as i64]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for trial in 0..20 {
            let n = rng.gen_range(1..300);
            let pts: Vec<Voxel> = (0..n).map(|_| [rng.gen_range(0..64), rng.gen_range(0..64), rng.gen_range(0..64)]).collect();
            let idx = if trial % 2 == 0 { GridIndex::new(&pts) } else { GridIndex::with_shift(&pts, 1) };
            for _ in 0..50 {
                let q = [rng.gen_range(-10..80), rng.gen_range(-10..80), rng.gen_range(-10..80)];
                let brute = pts.iter().enumerate().map(|(i, &p)| (dist2(q, p), i)).min().unwrap();
                let (i, d) = idx.nearest(q).unwrap();
                assert_eq!((d, i), brute);
                let k = 5.min(n);
                let mut all: Vec<(i64, usize)> = pts.iter().enumerate().map(|(i, &p)| (dist2(q, p), i)).collect();
                all.sort_unstable();
                assert_eq!(idx.k_nearest(q, k), all[..k].to_vec());
            }
        }
    }
}
