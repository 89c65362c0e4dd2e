//! `bvpc` command line front end.
//!
//! Every command prints one `key=value` record per line on success. Exit
//! codes: 0 success, 2 usage or conflicting options, 3 file errors, 4
//! malformed or corrupt input, 5 anything else.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use bvpc::attributes::{decode_attributes, encode_attributes, AttributeConfig, ATTRIBUTE_MAGIC};
use bvpc::container::Container;
use bvpc::geometry::{decode_geometry, encode_geometry, GeometryConfig, Pruning, Reconstruct};
use bvpc::hilbert::BasisOrder;
use bvpc::io::{read_cloud, synth_cloud, write_cloud, ColorField, PlyFormat, Shape};
use bvpc::metrics::{
    bits_per_voxel, d1, energy_compaction_sweep, luma, psnr_y, rd_sweep, write_compaction_csv, write_rd_csv,
};
use bvpc::VoxelCloud;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bvpc", version, about = "Volumetric B-spline point cloud codec")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    D1,
    Y,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepMode {
    Compaction,
    Rd,
}

#[derive(Subcommand)]
enum Command {
    /// Code voxel geometry into a .bvpc stream.
    EncodeGeometry {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Voxel grid depth used to voxelise the input.
        #[arg(long)]
        depth: u8,
        #[arg(long, default_value_t = 2)]
        start_level: usize,
        #[arg(long, default_value_t = 1.0)]
        qstep: f64,
        /// fixed:L, zero:t, dist:e or rd:lambda. Omit for voxel-level leaves.
        #[arg(long)]
        prune: Option<String>,
        #[arg(long, default_value = "deflate")]
        codec: String,
        /// Neighbourhood size for normal estimation when the input has none.
        #[arg(long, default_value_t = 12)]
        neighbors: usize,
    },
    /// Rebuild voxels from a .bvpc stream.
    DecodeGeometry {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// subdiv or raycast:r
        #[arg(long, default_value = "subdiv")]
        reconstruct: String,
        #[arg(long)]
        ascii: bool,
    },
    /// Code the colours of a cloud into a .bvat stream.
    EncodeAttributes {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        depth: u8,
        /// 1 = RAHT, 2 = tri-linear Bezier volumes.
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=2))]
        order: u8,
        #[arg(long, default_value_t = 1.0)]
        qstep: f64,
        #[arg(long, default_value_t = 0)]
        start_level: usize,
        #[arg(long, default_value = "deflate")]
        codec: String,
    },
    /// Decode a .bvat stream onto its geometry.
    DecodeAttributes {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        geometry: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ascii: bool,
    },
    /// Compare two clouds.
    Evaluate {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, value_enum, default_value = "d1")]
        metric: Metric,
        #[arg(long)]
        depth: u8,
    },
    /// Energy-compaction or rate-distortion sweep written as CSV.
    Sweep {
        #[arg(long, value_enum)]
        mode: SweepMode,
        #[arg(long)]
        out: PathBuf,
        /// Input cloud; a synthetic shape is generated when absent.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 7)]
        depth: u8,
        #[arg(long, default_value = "sphere")]
        shape: String,
        #[arg(long, default_value = "smooth-gradient")]
        field: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma separated pruning rules for the rd mode; defaults to
        /// fixed:3 up to fixed:depth.
        #[arg(long)]
        prune: Option<String>,
        #[arg(long, default_value_t = 2)]
        start_level: usize,
        #[arg(long, default_value_t = 1.0)]
        qstep: f64,
        #[arg(long, default_value = "subdiv")]
        reconstruct: String,
    },
    /// Write a synthetic voxelised surface with normals and colours.
    Synth {
        #[arg(long, default_value = "sphere")]
        shape: String,
        #[arg(long, default_value_t = 6)]
        depth: u8,
        #[arg(long, default_value = "smooth-gradient")]
        field: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ascii: bool,
    },
}

/// Conflicting or invalid option values detected by the front end.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn parse<T: std::str::FromStr<Err = bvpc::Error>>(s: &str) -> Result<T> {
    s.parse::<T>().map_err(|e| usage(e.to_string()))
}

fn format(ascii: bool) -> PlyFormat {
    if ascii {
        PlyFormat::Ascii
    } else {
        PlyFormat::BinaryLittleEndian
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn load(path: &Path, depth: u8) -> Result<VoxelCloud> {
    read_cloud(path, depth).with_context(|| format!("loading {}", path.display()))
}

fn check_depth(depth: u8) -> Result<()> {
    if depth == 0 || depth > bvpc::voxel::MAX_DEPTH {
        return Err(usage(format!("depth must be in 1..={}", bvpc::voxel::MAX_DEPTH)));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::EncodeGeometry { input, out, depth, start_level, qstep, prune, codec, neighbors } => {
            check_depth(depth)?;
            let pruning = prune.as_deref().map(parse::<Pruning>).transpose()?;
            if start_level > depth as usize {
                return Err(usage(format!("start level {start_level} exceeds depth {depth}")));
            }
            if let Some(Pruning::Fixed(l)) = pruning {
                if l < start_level {
                    return Err(usage(format!("fixed pruning level {l} is above start level {start_level}")));
                }
            }
            if !(qstep.is_finite() && qstep > 0.0) {
                return Err(usage("qstep must be positive"));
            }
            let cloud = load(&input, depth)?;
            let cfg = GeometryConfig { start_level, qstep, pruning, codec: parse(&codec)?, normal_neighbors: neighbors };
            let enc = encode_geometry(&cloud, &cfg)?;
            write_bytes(&out, &enc.bytes)?;
            let s = &enc.report.sizes;
            println!(
                "command=encode-geometry voxels={} bytes={} bits_per_voxel={:.6} leaves={} coded_symbols={} \
                 header_bytes={} occupancy_bytes={} flag_bytes={} start_bytes={} index_bytes={} wavelet_bytes={}",
                cloud.len(),
                enc.bytes.len(),
                enc.report.bits_per_voxel(),
                enc.tree.num_leaves(),
                enc.report.coded_symbols,
                s.header,
                s.sections[0],
                s.sections[1],
                s.sections[2],
                s.sections[3],
                s.sections[4],
            );
        }
        Command::DecodeGeometry { input, out, reconstruct, ascii } => {
            let mode: Reconstruct = parse(&reconstruct)?;
            let dec = decode_geometry(&read_bytes(&input)?)?;
            let cloud = dec.to_cloud(mode)?;
            write_cloud(&cloud, &out, format(ascii)).with_context(|| format!("writing {}", out.display()))?;
            println!(
                "command=decode-geometry voxels={} depth={} start_level={} qstep={} bezier_volumes={}",
                cloud.len(),
                dec.depth,
                dec.start,
                dec.qstep,
                dec.tree.bezier_leaves().count()
            );
        }
        Command::EncodeAttributes { input, out, depth, order, qstep, start_level, codec } => {
            check_depth(depth)?;
            if !(qstep.is_finite() && qstep > 0.0) {
                return Err(usage("qstep must be positive"));
            }
            let order = if order == 1 { BasisOrder::Constant } else { BasisOrder::Trilinear };
            if order == BasisOrder::Constant && start_level != 0 {
                return Err(usage("--start-level applies to order 2 only"));
            }
            let cloud = load(&input, depth)?;
            if cloud.attr_dim() == 0 {
                return Err(usage(format!("{} has no colours", input.display())));
            }
            let cfg = AttributeConfig { order, qstep, start_level, codec: parse(&codec)? };
            let enc = encode_attributes(&cloud, &cfg)?;
            write_bytes(&out, &enc.bytes)?;
            let coded = cloud.clone().with_attributes(cloud.attr_dim(), enc.reconstruction.clone())?;
            let ypsnr = match (luma(&cloud), luma(&coded)) {
                (Ok(a), Ok(b)) => format!("{:.6}", psnr_y(&a, &b)?),
                _ => "na".into(),
            };
            println!(
                "command=encode-attributes voxels={} order={} bytes={} bits_per_voxel={:.6} nonzero={} y_psnr={}",
                cloud.len(),
                order.p(),
                enc.bytes.len(),
                enc.bits_per_voxel(cloud.len()),
                enc.nonzero,
                ypsnr
            );
        }
        Command::DecodeAttributes { input, geometry, out, ascii } => {
            let bytes = read_bytes(&input)?;
            let depth = Container::from_bytes(&bytes, ATTRIBUTE_MAGIC)?.depth;
            let geom = load(&geometry, depth)?;
            let cloud = decode_attributes(&bytes, &geom)?;
            write_cloud(&cloud, &out, format(ascii)).with_context(|| format!("writing {}", out.display()))?;
            println!("command=decode-attributes voxels={} channels={}", cloud.len(), cloud.attr_dim());
        }
        Command::Evaluate { reference, test, metric, depth } => {
            check_depth(depth)?;
            let a = load(&reference, depth)?;
            let b = load(&test, depth)?;
            match metric {
                Metric::D1 => {
                    let r = d1(&a, &b)?;
                    println!(
                        "command=evaluate metric=d1 ref_voxels={} test_voxels={} mse_ab={:.6} mse_ba={:.6} psnr={:.6}",
                        a.len(),
                        b.len(),
                        r.mse_ab,
                        r.mse_ba,
                        r.psnr
                    );
                }
                Metric::Y => {
                    if a.positions() != b.positions() {
                        return Err(usage("luma PSNR needs identical voxel sets"));
                    }
                    let p = psnr_y(&luma(&a)?, &luma(&b)?)?;
                    println!("command=evaluate metric=y voxels={} psnr={p:.6}", a.len());
                }
            }
        }
        Command::Sweep { mode, out, input, depth, shape, field, seed, prune, start_level, qstep, reconstruct } => {
            check_depth(depth)?;
            let cloud = match &input {
                Some(p) => load(p, depth)?,
                None => synth_cloud(parse::<Shape>(&shape)?, depth, parse::<ColorField>(&field)?, seed)?,
            };
            let mut csv = Vec::new();
            let rows = match mode {
                SweepMode::Compaction => {
                    let mut rows = Vec::new();
                    for (name, order) in [("raht", BasisOrder::Constant), ("bv", BasisOrder::Trilinear)] {
                        rows.extend(energy_compaction_sweep(&cloud, order)?.into_iter().map(|p| (name, p)));
                    }
                    write_compaction_csv(&mut csv, &rows)?;
                    rows.len()
                }
                SweepMode::Rd => {
                    let rules: Vec<Pruning> = match &prune {
                        Some(list) => list.split(',').map(|s| parse::<Pruning>(s.trim())).collect::<Result<_>>()?,
                        None => (start_level.max(3)..=depth as usize).map(Pruning::Fixed).collect(),
                    };
                    let grid: Vec<GeometryConfig> = rules
                        .into_iter()
                        .map(|p| GeometryConfig { start_level, qstep, pruning: Some(p), ..Default::default() })
                        .collect();
                    let points = rd_sweep(&cloud, &grid, parse(&reconstruct)?);
                    write_rd_csv(&mut csv, &points)?;
                    points.len()
                }
            };
            write_bytes(&out, &csv)?;
            println!("command=sweep voxels={} rows={rows} out={}", cloud.len(), out.display());
        }
        Command::Synth { shape, depth, field, seed, out, ascii } => {
            let cloud = synth_cloud(parse(&shape)?, depth, parse(&field)?, seed).map_err(|e| usage(e.to_string()))?;
            write_cloud(&cloud, &out, format(ascii)).with_context(|| format!("writing {}", out.display()))?;
            println!(
                "command=synth voxels={} depth={depth} bits_per_voxel_raw={:.1}",
                cloud.len(),
                bits_per_voxel(3 * 4 * cloud.len(), cloud.len())
            );
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use bvpc::Error as E;
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 2;
        }
        if cause.is::<std::io::Error>() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Io(_) => 3,
                E::InvalidParameter(_) | E::LevelOutOfRange { .. } | E::UnsupportedDepth(_) => 2,
                E::PlyHeader(_)
                | E::PlyTruncated(_)
                | E::PlyUnsupportedType(_)
                | E::BadMagic
                | E::UnknownCodec(_)
                | E::Truncated(_)
                | E::Corrupt(_)
                | E::Model(_) => 4,
                _ => 5,
            };
        }
    }
    5
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
