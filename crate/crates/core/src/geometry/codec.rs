//! Geometry encoder and decoder.

use std::cell::OnceCell;
use std::str::FromStr;

use crate::container::{Container, SectionSizes};
use crate::entropy::bits::{ByteReader, ByteWriter};
use crate::entropy::rans::{decode_block, encode_block};
use crate::entropy::{ByteCodec, Quantizer};
use crate::error::{Error, Result};
use crate::geometry::inloop::{decode_in_loop, encode_in_loop, CodingPlan, CornerRole, InLoopResult};
use crate::geometry::normals::{ensure_normals, DEFAULT_NEIGHBORS};
use crate::geometry::prune::{prune_distortion, prune_zero_wavelets, Pruning, RdInput, RdPruner, ResidualTable};
use crate::geometry::sdf::{compute_sdf, corner_sdf, CornerField};
use crate::geometry::tree::PrunedOctree;
use crate::surface::{raycast, subdivide, BezierVolume};
use crate::voxel::{interleave, Voxel, VoxelCloud};

pub const GEOMETRY_MAGIC: [u8; 4] = *b"BVPC";
pub const DEFAULT_START_LEVEL: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryConfig {
    pub start_level: usize,
    pub qstep: f64,
    /// `None` keeps every block down to the voxels.
    pub pruning: Option<Pruning>,
    pub codec: ByteCodec,
    pub normal_neighbors: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            start_level: DEFAULT_START_LEVEL,
            qstep: 1.0,
            pruning: None,
            codec: ByteCodec::default(),
            normal_neighbors: DEFAULT_NEIGHBORS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeometryReport {
    pub input_voxels: usize,
    pub sizes: SectionSizes,
    pub leaves_per_level: Vec<usize>,
    pub coded_symbols: usize,
}

impl GeometryReport {
    pub fn total_bytes(&self) -> usize {
        self.sizes.total()
    }

    pub fn bits_per_voxel(&self) -> f64 {
        8.0 * self.total_bytes() as f64 / self.input_voxels as f64
    }
}

#[derive(Debug, Clone)]
pub struct EncodedGeometry {
    pub bytes: Vec<u8>,
    pub tree: PrunedOctree,
    pub plan: CodingPlan,
    /// Signed distances at every coded corner.
    pub sdf: CornerField,
    /// Encoder-side reconstruction (identical to the decoder's).
    pub values: CornerField,
    pub report: GeometryReport,
}

pub fn encode_geometry(cloud: &VoxelCloud, cfg: &GeometryConfig) -> Result<EncodedGeometry> {
    GeometryEncoder::new(cloud, cfg)?.encode(cfg.pruning)
}

/// Everything the exhaustive pruning rules need before a threshold is chosen.
#[derive(Debug)]
struct Analysis {
    sdf: CornerField,
    est: InLoopResult,
    table: ResidualTable,
}

/// Geometry encoder for one cloud and one start level, quantizer step and
/// normal estimate. The exhaustive analysis behind non-fixed pruning is built
/// on first use and shared by later calls to [`GeometryEncoder::encode`].
#[derive(Debug)]
pub struct GeometryEncoder {
    cloud: VoxelCloud,
    full: PrunedOctree,
    start: usize,
    qstep: f64,
    quantizer: Quantizer,
    codec: ByteCodec,
    analysis: OnceCell<Analysis>,
    rd: OnceCell<RdPruner>,
}

impl GeometryEncoder {
    /// Takes everything from `cfg` except the pruning rule.
    pub fn new(cloud: &VoxelCloud, cfg: &GeometryConfig) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let d = cloud.depth() as usize;
        let start = cfg.start_level;
        if start > d {
            return Err(Error::InvalidParameter(format!("start level {start} exceeds depth {d}")));
        }
        let quantizer = Quantizer::new(cfg.qstep)?;
        let cloud = ensure_normals(cloud, cfg.normal_neighbors)?;
        let full = PrunedOctree::full(&cloud);
        Ok(Self {
            cloud,
            full,
            start,
            qstep: cfg.qstep,
            quantizer,
            codec: cfg.codec,
            analysis: OnceCell::new(),
            rd: OnceCell::new(),
        })
    }

    fn analysis(&self) -> Result<&Analysis> {
        if let Some(a) = self.analysis.get() {
            return Ok(a);
        }
        let d = self.cloud.depth() as usize;
        let sdf = compute_sdf(&self.cloud, self.start..=d)?;
        let plan = CodingPlan::exhaustive(&self.full, self.start, d)?;
        let est = encode_in_loop(&plan, &sdf, self.cloud.depth(), &self.quantizer)?;
        let table = ResidualTable::new(&plan, &est);
        Ok(self.analysis.get_or_init(|| Analysis { sdf, est, table }))
    }

    fn rd_pruner(&self) -> Result<&RdPruner> {
        if let Some(r) = self.rd.get() {
            return Ok(r);
        }
        let a = self.analysis()?;
        let r = RdPruner::new(RdInput {
            cloud: &self.cloud,
            tree: &self.full,
            sdf: &a.sdf,
            recon: &a.est,
            table: &a.table,
            quantizer: &self.quantizer,
            start: self.start,
        })?;
        Ok(self.rd.get_or_init(|| r))
    }

    pub fn encode(&self, pruning: Option<Pruning>) -> Result<EncodedGeometry> {
        let cloud = &self.cloud;
        let d = cloud.depth() as usize;
        let start = self.start;
        let full = &self.full;

        let tree = match pruning {
            None => full.clone(),
            Some(Pruning::Fixed(l)) => {
                if l < start {
                    return Err(Error::InvalidParameter(format!("fixed level {l} is above start level {start}")));
                }
                full.prune_fixed(l.min(d))
            }
            Some(Pruning::ZeroWavelets(t)) => prune_zero_wavelets(full, &self.analysis()?.table, start, t),
            Some(Pruning::Distortion(e)) => prune_distortion(cloud, full, &self.analysis()?.est, start, e)?,
            Some(Pruning::RateDistortion(lambda)) => {
                if !(lambda.is_finite() && lambda >= 0.0) {
                    return Err(Error::InvalidParameter(format!("lambda must be finite and non-negative, got {lambda}")));
                }
                self.rd_pruner()?.prune(lambda)
            }
        };

        let plan = CodingPlan::for_tree(&tree, start)?;
        let sdf = match (pruning, self.analysis.get()) {
            (Some(Pruning::ZeroWavelets(_) | Pruning::Distortion(_) | Pruning::RateDistortion(_)), Some(a)) => {
                a.sdf.clone()
            }
            _ => {
                let mut f = CornerField::new(cloud.depth());
                for lp in &plan.levels {
                    for (&c, &r) in lp.corners.iter().zip(&lp.roles) {
                        if matches!(r, CornerRole::Start | CornerRole::Coded) {
                            f.insert(lp.level, c, corner_sdf(cloud, lp.level, c)?);
                        }
                    }
                }
                f
            }
        };
        let enc = encode_in_loop(&plan, &sdf, cloud.depth(), &self.quantizer)?;

        let occupancy = tree.occupancy_codes();
        let (flags, _) = tree.leaf_flags(start);
        let start_block = match enc.symbols.first() {
            Some(s) => encode_block(s)?,
            None => Vec::new(),
        };
        let payloads: Vec<Vec<u8>> = enc.symbols.iter().skip(1).map(|s| encode_block(s)).collect::<Result<_>>()?;
        let mut index = ByteWriter::new();
        if payloads.iter().any(|p| !p.is_empty()) {
            for p in &payloads {
                index.varint(p.len() as u64);
            }
        }
        let container = Container {
            magic: GEOMETRY_MAGIC,
            depth: cloud.depth(),
            start: start as u8,
            qstep: self.qstep,
            codec: self.codec,
            sections: [occupancy, flags, start_block, index.into_inner(), payloads.concat()],
        };
        let (bytes, sizes) = container.to_bytes()?;
        let report = GeometryReport {
            input_voxels: cloud.len(),
            sizes,
            leaves_per_level: tree.leaf_histogram(),
            coded_symbols: plan.num_symbols(),
        };
        Ok(EncodedGeometry { bytes, tree, plan, sdf, values: enc.values, report })
    }
}

/// Surface extraction for Bezier-volume leaves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reconstruct {
    Subdivide,
    /// Ray casting with the crossing range extended by this fraction of the
    /// block width on both sides.
    Raycast(f64),
}

impl FromStr for Reconstruct {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "subdiv" || s == "subdivide" {
            return Ok(Self::Subdivide);
        }
        if s == "raycast" {
            return Ok(Self::Raycast(0.0));
        }
        if let Some(r) = s.strip_prefix("raycast:") {
            let v: f64 = r.parse().map_err(|_| Error::InvalidParameter(format!("bad raycast range `{r}`")))?;
            if v.is_finite() && v >= 0.0 {
                return Ok(Self::Raycast(v));
            }
        }
        Err(Error::InvalidParameter(format!("unknown reconstruction `{s}`")))
    }
}

#[derive(Debug, Clone)]
pub struct DecodedGeometry {
    pub depth: u8,
    pub start: usize,
    pub qstep: f64,
    pub codec: ByteCodec,
    pub tree: PrunedOctree,
    pub values: CornerField,
}

pub fn decode_geometry(bytes: &[u8]) -> Result<DecodedGeometry> {
    let c = Container::from_bytes(bytes, GEOMETRY_MAGIC)?;
    if c.depth == 0 || c.depth > crate::voxel::MAX_DEPTH {
        return Err(Error::Corrupt(format!("depth {}", c.depth)));
    }
    if !(c.qstep.is_finite() && c.qstep > 0.0) {
        return Err(Error::Corrupt(format!("stepsize {}", c.qstep)));
    }
    let start = c.start as usize;
    let [occupancy, flags, start_block, index, payloads] = &c.sections;
    let tree = PrunedOctree::from_codes(c.depth, start, occupancy, flags)?;
    // Flags are byte padded; anything past the padding is damage.
    if tree.leaf_flags(start).0.len() != flags.len() {
        return Err(Error::Corrupt("leaf flag section length".into()));
    }
    let plan = CodingPlan::for_tree(&tree, start).map_err(|e| Error::Corrupt(e.to_string()))?;

    let mut symbols = Vec::with_capacity(plan.levels.len());
    if !plan.levels.is_empty() {
        symbols.push(decode_block(start_block)?);
    } else if !start_block.is_empty() {
        return Err(Error::Corrupt("start controls without a start level".into()));
    }
    let extra = plan.levels.len().saturating_sub(1);
    if index.is_empty() {
        if !payloads.is_empty() {
            return Err(Error::Corrupt("wavelet payload without an index".into()));
        }
        symbols.extend(std::iter::repeat_with(Vec::new).take(extra));
    } else {
        let mut r = ByteReader::new(index, "level index");
        let mut pos = 0usize;
        for _ in 0..extra {
            let len = r.varint()? as usize;
            let end = pos.checked_add(len).filter(|&e| e <= payloads.len()).ok_or(Error::Truncated("wavelet payload"))?;
            symbols.push(decode_block(&payloads[pos..end])?);
            pos = end;
        }
        if !r.is_empty() || pos != payloads.len() {
            return Err(Error::Corrupt("level index does not match payloads".into()));
        }
    }
    let values = decode_in_loop(&plan, &symbols, c.depth, &Quantizer::new(c.qstep)?)?;
    Ok(DecodedGeometry { depth: c.depth, start, qstep: c.qstep, codec: c.codec, tree, values })
}

impl DecodedGeometry {
    pub fn bezier_volumes(&self) -> Result<Vec<BezierVolume>> {
        self.tree
            .bezier_leaves()
            .map(|(l, b)| {
                let corners = self
                    .values
                    .block(l, b)
                    .ok_or_else(|| Error::Corrupt(format!("controls missing for leaf {b:?} at level {l}")))?;
                Ok(BezierVolume::new(l, b, corners))
            })
            .collect()
    }

    /// Decoded voxels in Morton order: the voxel-level leaves plus the
    /// zero crossings of every Bezier volume.
    pub fn voxels(&self, mode: Reconstruct) -> Result<Vec<Voxel>> {
        let mut out: Vec<Voxel> = self.tree.voxels().to_vec();
        for bv in self.bezier_volumes()? {
            match mode {
                Reconstruct::Subdivide => out.extend(subdivide(&bv, 0.0, self.depth)),
                Reconstruct::Raycast(r) => out.extend(raycast(&bv, 0.0, r, self.depth)),
            }
        }
        out.sort_unstable_by_key(|&v| interleave(v));
        out.dedup();
        Ok(out)
    }

    pub fn to_cloud(&self, mode: Reconstruct) -> Result<VoxelCloud> {
        let v = self.voxels(mode)?;
        if v.is_empty() {
            return Err(Error::EmptyCloud);
        }
        VoxelCloud::new(self.depth, v, 0, Vec::new(), None)
    }
}
