//! Geometry and attribute fidelity, rate accounting and sweeps.

use std::io::Write;

use crate::color::rgb_to_yuv;
use crate::error::{Error, Result};
use crate::geometry::{decode_geometry, GeometryConfig, GeometryEncoder, Reconstruct};
use crate::hilbert::{project, BasisOrder, Hierarchy};
use crate::raht::raht_smooth;
use crate::spatial::{to_i64, GridIndex};
use crate::voxel::{OctreeLevels, Voxel, VoxelCloud};

/// Reported in place of an infinite PSNR.
pub const PSNR_CAP: f64 = 999.0;

pub fn psnr_from_mse(mse: f64, peak_squared: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (peak_squared / mse).log10()).min(PSNR_CAP)
    }
}

/// Mean over `a` of the squared distance to the nearest point of `b`.
pub fn one_way_mse(a: &[Voxel], b: &[Voxel]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let index = GridIndex::new(b);
    let sum: f64 = a.iter().map(|&p| index.nearest(to_i64(p)).map_or(0, |(_, d)| d) as f64).sum();
    Ok(sum / a.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct D1 {
    pub mse_ab: f64,
    pub mse_ba: f64,
    pub psnr: f64,
}

impl D1 {
    pub fn mse(&self) -> f64 {
        self.mse_ab.max(self.mse_ba)
    }
}

/// Peak of the point-to-point PSNR: squared diagonal of the voxel grid.
pub fn d1_peak_squared(depth: u8) -> f64 {
    let s = ((1u64 << depth) - 1) as f64;
    3.0 * s * s
}

pub fn d1(reference: &VoxelCloud, test: &VoxelCloud) -> Result<D1> {
    if reference.depth() != test.depth() {
        return Err(Error::InvalidParameter(format!(
            "depth mismatch: {} vs {}",
            reference.depth(),
            test.depth()
        )));
    }
    let mse_ab = one_way_mse(reference.positions(), test.positions())?;
    let mse_ba = one_way_mse(test.positions(), reference.positions())?;
    let psnr = psnr_from_mse(mse_ab.max(mse_ba), d1_peak_squared(reference.depth()));
    Ok(D1 { mse_ab, mse_ba, psnr })
}

/// Symmetric point-to-point geometry PSNR.
pub fn psnr_d1(reference: &VoxelCloud, test: &VoxelCloud) -> Result<f64> {
    Ok(d1(reference, test)?.psnr)
}

/// PSNR of a luma channel with peak 255.
pub fn psnr_y(reference: &[f64], decoded: &[f64]) -> Result<f64> {
    if reference.len() != decoded.len() {
        return Err(Error::LengthMismatch { expected: reference.len(), actual: decoded.len() });
    }
    if reference.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mse = reference.iter().zip(decoded).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / reference.len() as f64;
    Ok(psnr_from_mse(mse, 255.0 * 255.0))
}

/// Luma of each voxel: BT.709 Y for RGB clouds, the channel itself for
/// single-channel clouds.
pub fn luma(cloud: &VoxelCloud) -> Result<Vec<f64>> {
    match cloud.attr_dim() {
        1 => Ok(cloud.channel(0)),
        3 => Ok((0..cloud.len())
            .map(|i| {
                let a = cloud.attribute(i);
                rgb_to_yuv([a[0], a[1], a[2]])[0]
            })
            .collect()),
        k => Err(Error::InvalidParameter(format!("no luma for {k}-channel attributes"))),
    }
}

pub fn bits_per_voxel(bytes: usize, voxels: usize) -> f64 {
    8.0 * bytes as f64 / voxels as f64
}

/// One point of an energy-compaction curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompactionPoint {
    /// Level in the transform's own indexing (binary for RAHT, cubic for BV).
    pub level: usize,
    /// Coefficients left after zeroing every detail at levels `>= level`.
    pub retained: usize,
    pub psnr: f64,
}

/// RAHT compaction at the given binary levels.
pub fn raht_compaction(cloud: &VoxelCloud, levels: impl IntoIterator<Item = usize>) -> Result<Vec<CompactionPoint>> {
    let y = luma(cloud)?;
    let octree = OctreeLevels::build(cloud)?;
    levels
        .into_iter()
        .map(|b| {
            if b > octree.max_level() {
                return Err(Error::LevelOutOfRange { level: b, max: octree.max_level() });
            }
            // Nothing is zeroed at the top level.
            if b == octree.max_level() {
                return Ok(CompactionPoint { level: b, retained: y.len(), psnr: PSNR_CAP });
            }
            let rec = raht_smooth(&octree, &y, b)?;
            Ok(CompactionPoint { level: b, retained: octree.num_blocks(b), psnr: psnr_y(&y, &rec)? })
        })
        .collect()
}

/// Tri-linear compaction at the given cubic levels. Zeroing the orthonormal
/// details at levels `>= L` leaves the orthogonal projection onto the
/// level-`L` space, so the curve is computed from that projection directly;
/// the retained count is the dimension of the space.
pub fn bv_compaction(cloud: &VoxelCloud, levels: impl IntoIterator<Item = usize>) -> Result<Vec<CompactionPoint>> {
    let y = luma(cloud)?;
    let geom = cloud.geometry_only().with_attributes(1, y.clone())?;
    let octree = OctreeLevels::build(&geom)?;
    let h = Hierarchy::build(&octree, BasisOrder::Trilinear)?;
    let moments = h.moments(&y)?;
    levels
        .into_iter()
        .map(|l| {
            if l > h.top() {
                return Err(Error::LevelOutOfRange { level: l, max: h.top() });
            }
            if l == h.top() {
                return Ok(CompactionPoint { level: l, retained: y.len(), psnr: PSNR_CAP });
            }
            let level = h.level(l);
            let proj = project(&level.gram, &level.shifts, std::slice::from_ref(&moments[l]))?;
            let rec = h.basis_matrix(l, &geom)?.matvec(&proj.coeffs[0]);
            Ok(CompactionPoint { level: l, retained: proj.rank(), psnr: psnr_y(&y, &rec)? })
        })
        .collect()
}

/// Compaction curve for cubic levels `0..=d`.
pub fn energy_compaction_sweep(cloud: &VoxelCloud, order: BasisOrder) -> Result<Vec<CompactionPoint>> {
    let d = cloud.depth() as usize;
    match order {
        BasisOrder::Constant => raht_compaction(cloud, (0..=d).map(|l| 3 * l)),
        BasisOrder::Trilinear => bv_compaction(cloud, 0..=d),
    }
}

pub fn write_compaction_csv(w: &mut impl Write, rows: &[(&str, CompactionPoint)]) -> std::io::Result<()> {
    writeln!(w, "transform,level,retained,y_psnr")?;
    for (name, p) in rows {
        writeln!(w, "{name},{},{},{:.6}", p.level, p.retained, p.psnr)?;
    }
    Ok(())
}

/// One encode/decode/measure cycle of the geometry codec.
#[derive(Debug, Clone, PartialEq)]
pub struct RdPoint {
    pub method: String,
    pub params: String,
    pub bits_per_voxel: f64,
    pub psnr: f64,
    pub bytes: usize,
    pub error: Option<String>,
}

fn method_name(cfg: &GeometryConfig) -> String {
    match cfg.pruning {
        None => "lossless".into(),
        Some(p) => p.to_string().split(':').next().unwrap_or_default().to_string(),
    }
}

pub fn rd_point(cloud: &VoxelCloud, cfg: &GeometryConfig, mode: Reconstruct) -> RdPoint {
    let enc = GeometryEncoder::new(cloud, cfg);
    point_with(cloud, enc.as_ref(), cfg, mode)
}

fn point_with(
    cloud: &VoxelCloud,
    encoder: std::result::Result<&GeometryEncoder, &Error>,
    cfg: &GeometryConfig,
    mode: Reconstruct,
) -> RdPoint {
    let params = format!(
        "{} start={} qstep={}",
        cfg.pruning.map_or("none".to_string(), |p| p.to_string()),
        cfg.start_level,
        cfg.qstep
    );
    let run = |encoder: &GeometryEncoder| -> Result<(usize, f64)> {
        let enc = encoder.encode(cfg.pruning)?;
        let dec = decode_geometry(&enc.bytes)?.to_cloud(mode)?;
        Ok((enc.bytes.len(), psnr_d1(cloud, &dec)?))
    };
    match encoder.map_err(|e| e.to_string()).and_then(|e| run(e).map_err(|e| e.to_string())) {
        Ok((bytes, psnr)) => RdPoint {
            method: method_name(cfg),
            params,
            bits_per_voxel: bits_per_voxel(bytes, cloud.len()),
            psnr,
            bytes,
            error: None,
        },
        Err(e) => RdPoint {
            method: method_name(cfg),
            params,
            bits_per_voxel: f64::NAN,
            psnr: f64::NAN,
            bytes: 0,
            error: Some(e),
        },
    }
}

/// Runs every configuration; failures are recorded, not propagated.
/// Configurations that differ only in pruning share one encoder.
pub fn rd_sweep(cloud: &VoxelCloud, grid: &[GeometryConfig], mode: Reconstruct) -> Vec<RdPoint> {
    let mut encoders: Vec<(GeometryConfig, Result<GeometryEncoder>)> = Vec::new();
    grid.iter()
        .map(|cfg| {
            let key = GeometryConfig { pruning: None, ..cfg.clone() };
            let at = match encoders.iter().position(|(k, _)| *k == key) {
                Some(i) => i,
                None => {
                    encoders.push((key, GeometryEncoder::new(cloud, cfg)));
                    encoders.len() - 1
                }
            };
            point_with(cloud, encoders[at].1.as_ref(), cfg, mode)
        })
        .collect()
}

pub fn write_rd_csv(w: &mut impl Write, points: &[RdPoint]) -> std::io::Result<()> {
    writeln!(w, "method,params,bits_per_voxel,d1_psnr,error")?;
    for p in points {
        let err = p.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        writeln!(w, "{},{},{:.6},{:.6},{}", p.method, p.params, p.bits_per_voxel, p.psnr, err)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pruning;
    use crate::io::synth::{synth_cloud, ColorField, Shape};
    use rand::{Rng, SeedableRng};

    fn cloud(pos: Vec<Voxel>, d: u8) -> VoxelCloud {
        VoxelCloud::from_unsorted(d, pos, 0, vec![], None).unwrap()
    }

    #[test]
    fn d1_examples() {
        let a = cloud(vec![[5, 5, 5]], 10);
        let b = cloud(vec![[5, 5, 6]], 10);
        assert_eq!(psnr_d1(&a, &a).unwrap(), PSNR_CAP);
        let p = psnr_d1(&a, &b).unwrap();
        assert!((p - 10.0 * (3.0f64 * 1023.0 * 1023.0).log10()).abs() < 1e-12);
        assert!((p - 64.97).abs() < 0.01);
        assert!(psnr_d1(&a, &cloud(vec![[1, 1, 1]], 9)).is_err());
    }

    #[test]
    fn d1_matches_brute_force_and_is_symmetric() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = rng.gen_range(1..500);
            let m = rng.gen_range(1..500);
            let mut gen = |k| (0..k).map(|_| [rng.gen_range(0..64), rng.gen_range(0..64), rng.gen_range(0..64)]).collect::<Vec<_>>();
            let a = cloud(gen(n), 6);
            let b = cloud(gen(m), 6);
            let brute = |x: &[Voxel], y: &[Voxel]| {
                x.iter()
                    .map(|p| {
                        y.iter()
                            .map(|q| (0..3).map(|k| (p[k] as f64 - q[k] as f64).powi(2)).sum::<f64>())
                            .fold(f64::INFINITY, f64::min)
                    })
                    .sum::<f64>()
                    / x.len() as f64
            };
            let r = d1(&a, &b).unwrap();
            assert_eq!(r.mse_ab, brute(a.positions(), b.positions()));
            assert_eq!(r.mse_ba, brute(b.positions(), a.positions()));
            assert_eq!(psnr_d1(&a, &b).unwrap(), psnr_d1(&b, &a).unwrap());
        }
    }

    #[test]
    fn psnr_y_examples() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(psnr_y(&a, &a).unwrap(), PSNR_CAP);
        let b: Vec<f64> = a.iter().map(|v| v + 1.0).collect();
        assert!((psnr_y(&a, &b).unwrap() - 48.1308).abs() < 1e-4);
        assert!(psnr_y(&a, &b[1..]).is_err());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let x: Vec<f64> = (0..64).map(|_| rng.gen_range(0.0..255.0)).collect();
            let y: Vec<f64> = (0..64).map(|_| rng.gen_range(0.0..255.0)).collect();
            let mse = x.iter().zip(&y).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / 64.0;
            assert!((psnr_y(&x, &y).unwrap() - 10.0 * (65025.0 / mse).log10()).abs() < 1e-9);
        }
    }

    #[test]
    fn compaction_curves() {
        let c = synth_cloud(Shape::Sphere, 4, ColorField::SmoothGradient, 0).unwrap();
        for order in [BasisOrder::Constant, BasisOrder::Trilinear] {
            let curve = energy_compaction_sweep(&c, order).unwrap();
            assert_eq!(curve.len(), 5);
            assert_eq!(curve.last().unwrap().psnr, PSNR_CAP);
            assert_eq!(curve.last().unwrap().retained, c.len());
            for w in curve.windows(2) {
                assert!(w[1].retained >= w[0].retained);
                assert!(w[1].psnr >= w[0].psnr - 1e-9);
            }
        }
    }

    #[test]
    fn projection_curve_matches_transform_smoothing() {
        let c = synth_cloud(Shape::Sphere, 3, ColorField::SmoothGradient, 2).unwrap();
        let y = luma(&c).unwrap();
        let g = c.geometry_only().with_attributes(1, y.clone()).unwrap();
        let o = OctreeLevels::build(&g).unwrap();
        let t = crate::bv::BvTransform::build(&o, BasisOrder::Trilinear, 0).unwrap();
        let curve = bv_compaction(&c, 0..=3).unwrap();
        for p in &curve[..3] {
            let rec = t.smooth(&y, p.level).unwrap();
            assert!((psnr_y(&y, &rec).unwrap() - p.psnr).abs() < 1e-6, "{p:?}");
            assert_eq!(t.dimension(p.level), p.retained);
        }
    }

    #[test]
    fn rd_sweep_rows() {
        let c = synth_cloud(Shape::Sphere, 5, ColorField::Checker, 0).unwrap();
        let grid = vec![
            GeometryConfig { pruning: Some(Pruning::Fixed(4)), ..Default::default() },
            GeometryConfig { pruning: Some(Pruning::Fixed(1)), ..Default::default() },
        ];
        let pts = rd_sweep(&c, &grid, Reconstruct::Subdivide);
        assert_eq!(pts.len(), 2);
        assert!(pts[0].error.is_none() && pts[0].bits_per_voxel > 0.0 && pts[0].psnr.is_finite());
        assert!(pts[1].error.is_some());
        let mut out = Vec::new();
        write_rd_csv(&mut out, &pts).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("method,params,bits_per_voxel,d1_psnr,error"));
    }
}
