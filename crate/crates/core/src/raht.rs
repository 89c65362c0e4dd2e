//! Region-adaptive Haar transform over the binary Morton tree.

use crate::error::{Error, Result};
use crate::voxel::OctreeLevels;

/// Transform output for one attribute channel.
#[derive(Debug, Clone, PartialEq)]
pub struct RahtCoefficients {
    pub dc: f64,
    /// High-pass coefficients per binary level `0..3d`, in Morton order of
    /// the parent block. Only blocks with two children emit one.
    pub highpass: Vec<Vec<f64>>,
}

impl RahtCoefficients {
    /// Total coefficient count; equals the number of voxels.
    pub fn len(&self) -> usize {
        1 + self.highpass.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Level-major serialisation: dc first, then coarse to fine.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.push(self.dc);
        for h in &self.highpass {
            out.extend_from_slice(h);
        }
        out
    }

    pub fn from_flat(octree: &OctreeLevels, flat: &[f64]) -> Result<Self> {
        let counts = highpass_counts(octree);
        let total = 1 + counts.iter().sum::<usize>();
        if flat.len() != total {
            return Err(Error::LengthMismatch { expected: total, actual: flat.len() });
        }
        let mut pos = 1;
        let highpass = counts
            .iter()
            .map(|&c| {
                let v = flat[pos..pos + c].to_vec();
                pos += c;
                v
            })
            .collect();
        Ok(Self { dc: flat[0], highpass })
    }

    pub fn energy(&self) -> f64 {
        self.dc * self.dc + self.highpass.iter().flatten().map(|v| v * v).sum::<f64>()
    }
}

/// Number of high-pass coefficients at each binary level.
pub fn highpass_counts(octree: &OctreeLevels) -> Vec<usize> {
    (0..octree.max_level())
        .map(|l| (0..octree.num_blocks(l)).filter(|&b| octree.children(l, b).len() == 2).count())
        .collect()
}

/// Weight (voxel count) of every block at every binary level.
pub fn raht_weights(octree: &OctreeLevels) -> Vec<Vec<u64>> {
    (0..=octree.max_level())
        .map(|l| (0..octree.num_blocks(l)).map(|b| octree.weight(l, b)).collect())
        .collect()
}

#[inline]
fn rotation(w0: u64, w1: u64) -> (f64, f64) {
    let s = ((w0 + w1) as f64).sqrt();
    ((w0 as f64).sqrt() / s, (w1 as f64).sqrt() / s)
}

/// Normalised low-pass coefficients at every binary level, finest last.
pub fn raht_lowpass_levels(octree: &OctreeLevels, values: &[f64]) -> Result<Vec<Vec<f64>>> {
    Ok(analyse(octree, values)?.0)
}

fn analyse(octree: &OctreeLevels, values: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let top = octree.max_level();
    if values.len() != octree.num_voxels() {
        return Err(Error::LengthMismatch { expected: octree.num_voxels(), actual: values.len() });
    }
    let mut low = vec![Vec::new(); top + 1];
    let mut high = vec![Vec::new(); top];
    low[top] = values.to_vec();
    for l in (0..top).rev() {
        let mut lo = Vec::with_capacity(octree.num_blocks(l));
        let mut hi = Vec::new();
        for b in 0..octree.num_blocks(l) {
            let ch = octree.children(l, b);
            if ch.len() == 1 {
                lo.push(low[l + 1][ch.start]);
            } else {
                let (c0, c1) = (ch.start, ch.start + 1);
                let (a, bb) = rotation(octree.weight(l + 1, c0), octree.weight(l + 1, c1));
                let (f0, f1) = (low[l + 1][c0], low[l + 1][c1]);
                lo.push(a * f0 + bb * f1);
                hi.push(-bb * f0 + a * f1);
            }
        }
        low[l] = lo;
        high[l] = hi;
    }
    Ok((low, high))
}

pub fn raht_forward(octree: &OctreeLevels, values: &[f64]) -> Result<RahtCoefficients> {
    let (low, highpass) = analyse(octree, values)?;
    Ok(RahtCoefficients { dc: low[0][0], highpass })
}

pub fn raht_inverse(octree: &OctreeLevels, coeffs: &RahtCoefficients) -> Result<Vec<f64>> {
    let top = octree.max_level();
    let counts = highpass_counts(octree);
    if coeffs.highpass.len() != top {
        return Err(Error::LengthMismatch { expected: top, actual: coeffs.highpass.len() });
    }
    for (l, (h, &c)) in coeffs.highpass.iter().zip(&counts).enumerate() {
        if h.len() != c {
            return Err(Error::InvalidParameter(format!(
                "level {l}: {} high-pass coefficients, octree needs {c}",
                h.len()
            )));
        }
    }
    let mut cur = vec![coeffs.dc];
    for l in 0..top {
        let mut next = vec![0.0; octree.num_blocks(l + 1)];
        let mut k = 0;
        for (b, &f) in cur.iter().enumerate() {
            let ch = octree.children(l, b);
            if ch.len() == 1 {
                next[ch.start] = f;
            } else {
                let (c0, c1) = (ch.start, ch.start + 1);
                let (a, bb) = rotation(octree.weight(l + 1, c0), octree.weight(l + 1, c1));
                let g = coeffs.highpass[l][k];
                k += 1;
                next[c0] = a * f - bb * g;
                next[c1] = bb * f + a * g;
            }
        }
        cur = next;
    }
    Ok(cur)
}

/// Reconstruction with every high-pass coefficient at levels `>= level`
/// zeroed: the per-block mean at binary level `level`.
pub fn raht_smooth(octree: &OctreeLevels, values: &[f64], level: usize) -> Result<Vec<f64>> {
    let mut c = raht_forward(octree, values)?;
    for h in c.highpass.iter_mut().skip(level) {
        h.iter_mut().for_each(|v| *v = 0.0);
    }
    raht_inverse(octree, &c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxel::VoxelCloud;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn cloud(pos: Vec<[u32; 3]>, vals: Vec<f64>, d: u8) -> (VoxelCloud, OctreeLevels) {
        let c = VoxelCloud::from_unsorted(d, pos, 1, vals, None).unwrap();
        let o = OctreeLevels::build(&c).unwrap();
        (c, o)
    }

    #[test]
    fn single_voxel() {
        let (_, o) = cloud(vec![[1, 2, 3]], vec![7.0], 2);
        let c = raht_forward(&o, &[7.0]).unwrap();
        assert_eq!(c.dc, 7.0);
        assert!(c.highpass.iter().all(Vec::is_empty));
    }

    #[test]
    fn two_voxels() {
        let (_, o) = cloud(vec![[0, 0, 0], [1, 0, 0]], vec![2.0, 4.0], 1);
        let c = raht_forward(&o, &[2.0, 4.0]).unwrap();
        assert!((c.dc - 6.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!((c.highpass[0][0] - 2.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!((c.energy() - 20.0).abs() < 1e-12);
        let back = raht_inverse(&o, &c).unwrap();
        assert!((back[0] - 2.0).abs() < 1e-12 && (back[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn unequal_weights() {
        // One voxel (value 0) in the low x half, three (value 4) in the high.
        let (_, o) = cloud(vec![[0, 0, 0], [1, 0, 0], [1, 1, 0], [1, 0, 1]], vec![0.0, 4.0, 4.0, 4.0], 1);
        let c = raht_forward(&o, &[0.0, 4.0, 4.0, 4.0]).unwrap();
        assert!((c.dc - 6.0).abs() < 1e-12);
        assert!((c.highpass[0][0] - 2.0 * 3f64.sqrt()).abs() < 1e-12);
        let low = raht_lowpass_levels(&o, &[0.0, 4.0, 4.0, 4.0]).unwrap();
        assert!((low[1][1] - 4.0 * 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn weights_match_subtree_counts() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pos: Vec<[u32; 3]> = (0..60).map(|_| [rng.gen_range(0..8), rng.gen_range(0..8), rng.gen_range(0..8)]).collect();
        let (c, o) = cloud(pos, vec![0.0; 60], 3);
        let w = raht_weights(&o);
        assert_eq!(w[0][0], c.len() as u64);
        let top = o.max_level();
        for l in 0..=top {
            for (b, &wb) in w[l].iter().enumerate() {
                let p = o.prefix(l, b);
                let brute = c.codes().iter().filter(|&&code| code >> (top - l) == p).count() as u64;
                assert_eq!(wb, brute);
            }
        }
    }

    #[test]
    fn zeroed_highpass_gives_block_means() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let pos: Vec<[u32; 3]> = (0..50).map(|_| [rng.gen_range(0..8), rng.gen_range(0..8), rng.gen_range(0..8)]).collect();
        let vals: Vec<f64> = (0..50).map(|_| rng.gen_range(0.0..100.0)).collect();
        let (c, o) = cloud(pos, vals, 3);
        let f = c.channel(0);
        for level in [0, 3, 6] {
            let s = raht_smooth(&o, &f, level).unwrap();
            for b in 0..o.num_blocks(level) {
                let r = o.voxel_range(level, b);
                let mean = f[r.clone()].iter().sum::<f64>() / r.len() as f64;
                for i in r {
                    assert!((s[i] - mean).abs() < 1e-9);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn parseval_and_roundtrip(seed in 0u64..1000, n in 1usize..256) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pos: Vec<[u32; 3]> = (0..n).map(|_| [rng.gen_range(0..16), rng.gen_range(0..16), rng.gen_range(0..16)]).collect();
            let vals: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
            let (c, o) = cloud(pos, vals, 4);
            let f = c.channel(0);
            let co = raht_forward(&o, &f).unwrap();
            prop_assert_eq!(co.len(), c.len());
            let e: f64 = f.iter().map(|v| v * v).sum();
            prop_assert!((co.energy() - e).abs() <= 1e-9 * e.max(1.0));
            let back = raht_inverse(&o, &co).unwrap();
            for (a, b) in back.iter().zip(&f) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
            let flat = co.flatten();
            prop_assert_eq!(RahtCoefficients::from_flat(&o, &flat).unwrap(), co);
            let mean = f.iter().sum::<f64>() / f.len() as f64;
            let dc = raht_forward(&o, &f).unwrap().dc;
            prop_assert!((dc - (f.len() as f64).sqrt() * mean).abs() < 1e-9);
        }
    }

    #[test]
    fn mismatched_coefficients_rejected() {
        let (_, o) = cloud(vec![[0, 0, 0], [1, 0, 0]], vec![2.0, 4.0], 1);
        assert!(RahtCoefficients::from_flat(&o, &[1.0]).is_err());
        let bad = RahtCoefficients { dc: 0.0, highpass: vec![vec![], vec![], vec![]] };
        assert!(raht_inverse(&o, &bad).is_err());
    }
}
