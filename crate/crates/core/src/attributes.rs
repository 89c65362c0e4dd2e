//! Attribute encoder and decoder: RAHT (order 1) or the tri-linear
//! Bezier-volume transform (order 2), uniform quantisation, and RLGR per
//! level and channel. Geometry is side information at both ends.

use crate::color::{rgb_to_yuv, yuv_to_rgb};
use crate::container::{Container, SectionSizes};
use crate::entropy::bits::{ByteReader, ByteWriter};
use crate::entropy::{rlgr_decode, rlgr_encode, ByteCodec, Quantizer};
use crate::error::{Error, Result};
use crate::hilbert::BasisOrder;
use crate::bv::{BvCoefficients, BvTransform};
use crate::raht::{raht_forward, raht_inverse, RahtCoefficients};
use crate::voxel::{OctreeLevels, VoxelCloud};

pub const ATTRIBUTE_MAGIC: [u8; 4] = *b"BVAT";

/// Order-2 transforms factor dense per-component matrices; larger clouds are
/// refused rather than left to run for hours.
pub const MAX_TRILINEAR_POINTS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorSpace {
    /// Channels coded as given.
    Raw = 0,
    /// RGB converted to BT.709 YUV before the transform.
    Yuv = 1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeConfig {
    pub order: BasisOrder,
    pub qstep: f64,
    /// Start level of the order-2 cascade; ignored for order 1.
    pub start_level: usize,
    pub codec: ByteCodec,
}

impl Default for AttributeConfig {
    fn default() -> Self {
        Self { order: BasisOrder::Trilinear, qstep: 1.0, start_level: 0, codec: ByteCodec::default() }
    }
}

#[derive(Debug, Clone)]
pub struct EncodedAttributes {
    pub bytes: Vec<u8>,
    pub sizes: SectionSizes,
    /// Decoder output, computed at the encoder.
    pub reconstruction: Vec<f64>,
    pub nonzero: usize,
}

impl EncodedAttributes {
    pub fn bits_per_voxel(&self, voxels: usize) -> f64 {
        8.0 * self.bytes.len() as f64 / voxels as f64
    }
}

enum Transform {
    Raht(OctreeLevels),
    Bv(Box<BvTransform>),
}

impl Transform {
    fn build(cloud: &VoxelCloud, order: BasisOrder, start: usize) -> Result<Self> {
        let octree = OctreeLevels::build(cloud)?;
        match order {
            BasisOrder::Constant => Ok(Self::Raht(octree)),
            BasisOrder::Trilinear => {
                if cloud.len() > MAX_TRILINEAR_POINTS {
                    return Err(Error::InvalidParameter(format!(
                        "order 2 attribute coding supports at most {MAX_TRILINEAR_POINTS} points, got {}",
                        cloud.len()
                    )));
                }
                Ok(Self::Bv(Box::new(BvTransform::build(&octree, order, start)?)))
            }
        }
    }

    /// Coefficients grouped by level, coarsest first.
    fn forward(&self, values: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(match self {
            Self::Raht(o) => {
                let c = raht_forward(o, values)?;
                std::iter::once(vec![c.dc]).chain(c.highpass).collect()
            }
            Self::Bv(t) => {
                let c = t.forward(values)?;
                std::iter::once(c.base).chain(c.details).collect()
            }
        })
    }

    fn group_sizes(&self) -> Result<Vec<usize>> {
        Ok(match self {
            Self::Raht(o) => std::iter::once(1).chain(crate::raht::highpass_counts(o)).collect(),
            Self::Bv(t) => std::iter::once(t.dimension(t.start()))
                .chain((t.start()..t.top()).map(|j| t.num_wavelets(j)))
                .collect(),
        })
    }

    fn inverse(&self, mut groups: Vec<Vec<f64>>) -> Result<Vec<f64>> {
        let first = groups.remove(0);
        match self {
            Self::Raht(o) => raht_inverse(o, &RahtCoefficients { dc: first[0], highpass: groups }),
            Self::Bv(t) => t.inverse(&BvCoefficients { base: first, details: groups }),
        }
    }
}

fn to_coding_space(cloud: &VoxelCloud) -> (ColorSpace, Vec<Vec<f64>>) {
    let k = cloud.attr_dim();
    if k == 3 {
        let mut ch = [(); 3].map(|_| Vec::with_capacity(cloud.len()));
        for i in 0..cloud.len() {
            let a = cloud.attribute(i);
            let yuv = rgb_to_yuv([a[0], a[1], a[2]]);
            for c in 0..3 {
                ch[c].push(yuv[c]);
            }
        }
        (ColorSpace::Yuv, ch.into())
    } else {
        (ColorSpace::Raw, (0..k).map(|c| cloud.channel(c)).collect())
    }
}

/// Interleaves channels back into per-voxel vectors in the input space.
fn from_coding_space(space: ColorSpace, channels: &[Vec<f64>]) -> Vec<f64> {
    let n = channels.first().map_or(0, Vec::len);
    let k = channels.len();
    let mut out = Vec::with_capacity(n * k);
    for i in 0..n {
        match space {
            ColorSpace::Yuv => out.extend(yuv_to_rgb([channels[0][i], channels[1][i], channels[2][i]])),
            ColorSpace::Raw => out.extend(channels.iter().map(|c| c[i])),
        }
    }
    out
}

fn order_id(order: BasisOrder) -> u8 {
    order.p()
}

fn order_from_id(id: u8) -> Result<BasisOrder> {
    match id {
        1 => Ok(BasisOrder::Constant),
        2 => Ok(BasisOrder::Trilinear),
        _ => Err(Error::Corrupt(format!("unknown transform order {id}"))),
    }
}

pub fn encode_attributes(cloud: &VoxelCloud, cfg: &AttributeConfig) -> Result<EncodedAttributes> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let k = cloud.attr_dim();
    if k == 0 || k > u8::MAX as usize {
        return Err(Error::InvalidParameter(format!("cannot code {k} attribute channels")));
    }
    let q = Quantizer::new(cfg.qstep)?;
    let start = if cfg.order == BasisOrder::Constant { 0 } else { cfg.start_level };
    let transform = Transform::build(&cloud.geometry_only(), cfg.order, start)?;
    let (space, channels) = to_coding_space(cloud);

    let mut info = ByteWriter::new();
    info.u8(k as u8);
    info.u8(order_id(cfg.order));
    info.u8(space as u8);
    info.u32(cloud.len() as u32);

    let mut quantized: Vec<Vec<Vec<i64>>> = Vec::with_capacity(k);
    for ch in &channels {
        let groups = transform.forward(ch)?;
        quantized.push(groups.iter().map(|g| g.iter().map(|&v| q.quantize(v)).collect()).collect());
    }
    let mut payload = ByteWriter::new();
    let levels = quantized[0].len();
    for l in 0..levels {
        for ch in &quantized {
            let syms = &ch[l];
            let bytes = rlgr_encode(syms)?;
            payload.u32(syms.len() as u32);
            payload.u32(bytes.len() as u32);
            payload.bytes(&bytes);
        }
    }
    let nonzero = quantized.iter().flatten().flatten().filter(|&&s| s != 0).count();
    let recon_channels: Vec<Vec<f64>> = quantized
        .iter()
        .map(|g| transform.inverse(g.iter().map(|s| s.iter().map(|&v| q.dequantize(v)).collect()).collect()))
        .collect::<Result<_>>()?;

    let container = Container {
        magic: ATTRIBUTE_MAGIC,
        depth: cloud.depth(),
        start: start as u8,
        qstep: cfg.qstep,
        codec: cfg.codec,
        sections: [info.into_inner(), payload.into_inner(), Vec::new(), Vec::new(), Vec::new()],
    };
    let (bytes, sizes) = container.to_bytes()?;
    Ok(EncodedAttributes { bytes, sizes, reconstruction: from_coding_space(space, &recon_channels), nonzero })
}

/// Decodes attributes onto `geometry`, which must be the voxel set the
/// stream was encoded with. Returns the cloud with the decoded attributes.
pub fn decode_attributes(bytes: &[u8], geometry: &VoxelCloud) -> Result<VoxelCloud> {
    let c = Container::from_bytes(bytes, ATTRIBUTE_MAGIC)?;
    if c.depth != geometry.depth() {
        return Err(Error::InvalidParameter(format!(
            "attribute stream has depth {}, geometry has {}",
            c.depth,
            geometry.depth()
        )));
    }
    if c.sections[2..].iter().any(|s| !s.is_empty()) {
        return Err(Error::Corrupt("unexpected attribute sections".into()));
    }
    let q = Quantizer::new(c.qstep).map_err(|_| Error::Corrupt(format!("stepsize {}", c.qstep)))?;
    let mut info = ByteReader::new(&c.sections[0], "attribute info");
    let k = info.u8()? as usize;
    let order = order_from_id(info.u8()?)?;
    let space = match info.u8()? {
        0 => ColorSpace::Raw,
        1 if k == 3 => ColorSpace::Yuv,
        s => return Err(Error::Corrupt(format!("colour space {s} with {k} channels"))),
    };
    let n = info.u32()? as usize;
    if !info.is_empty() || k == 0 {
        return Err(Error::Corrupt("attribute info".into()));
    }
    if n != geometry.len() {
        return Err(Error::InvalidParameter(format!("attribute stream has {n} points, geometry has {}", geometry.len())));
    }
    let transform = Transform::build(&geometry.geometry_only(), order, c.start as usize)?;
    let sizes = transform.group_sizes()?;
    let mut r = ByteReader::new(&c.sections[1], "attribute payload");
    let mut groups: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(sizes.len()); k];
    for &size in &sizes {
        for ch in groups.iter_mut() {
            let count = r.u32()? as usize;
            if count != size {
                return Err(Error::Corrupt(format!("level carries {count} coefficients, expected {size}")));
            }
            let len = r.u32()? as usize;
            let syms = rlgr_decode(r.take(len)?, count)?;
            ch.push(syms.into_iter().map(|s| q.dequantize(s)).collect());
        }
    }
    if !r.is_empty() {
        return Err(Error::Corrupt("trailing attribute payload".into()));
    }
    let channels: Vec<Vec<f64>> = groups.into_iter().map(|g| transform.inverse(g)).collect::<Result<_>>()?;
    geometry.geometry_only().with_attributes(k, from_coding_space(space, &channels))
}
