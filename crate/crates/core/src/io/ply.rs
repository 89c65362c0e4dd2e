//! PLY reader and writer for the vertex element (ascii and binary
//! little-endian).

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::voxel::{quantize_points, BoundingCube, VoxelCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            other => return Err(Error::PlyUnsupportedType(other.to_string())),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::I8 => "char",
            Self::U8 => "uchar",
            Self::I16 => "short",
            Self::U16 => "ushort",
            Self::I32 => "int",
            Self::U32 => "uint",
            Self::F32 => "float",
            Self::F64 => "double",
        }
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }

    fn encode(self, v: f64, out: &mut Vec<u8>) {
        match self {
            Self::I8 => out.push(v as i8 as u8),
            Self::U8 => out.push(v as u8),
            Self::I16 => out.extend_from_slice(&(v as i16).to_le_bytes()),
            Self::U16 => out.extend_from_slice(&(v as u16).to_le_bytes()),
            Self::I32 => out.extend_from_slice(&(v as i32).to_le_bytes()),
            Self::U32 => out.extend_from_slice(&(v as u32).to_le_bytes()),
            Self::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Self::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, Self::F32 | Self::F64)
    }

    /// Shortest text that parses back to the same stored value.
    fn format(self, v: f64) -> String {
        match self {
            Self::F32 => format!("{}", v as f32),
            Self::F64 => format!("{v}"),
            _ => format!("{}", v as i64),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Property {
    Scalar(ScalarType),
    List { count: ScalarType, item: ScalarType },
}

#[derive(Debug, Clone, PartialEq)]
struct Element {
    name: String,
    count: usize,
    props: Vec<(String, Property)>,
}

/// Vertex table of a PLY file. Other elements are skipped on read.
#[derive(Debug, Clone, PartialEq)]
pub struct PlyDocument {
    pub format: PlyFormat,
    pub properties: Vec<(String, ScalarType)>,
    /// Row-major, one row of `properties.len()` values per vertex.
    pub values: Vec<f64>,
}

impl PlyDocument {
    pub fn len(&self) -> usize {
        if self.properties.is_empty() {
            0
        } else {
            self.values.len() / self.properties.len()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.properties.iter().position(|(n, _)| n == name)
    }

    fn triple(&self, names: [&str; 3]) -> Option<Vec<[f64; 3]>> {
        let idx = [self.column(names[0])?, self.column(names[1])?, self.column(names[2])?];
        let w = self.properties.len();
        Some(
            self.values
                .chunks_exact(w)
                .map(|row| [row[idx[0]], row[idx[1]], row[idx[2]]])
                .collect(),
        )
    }

    pub fn positions(&self) -> Result<Vec<[f64; 3]>> {
        self.triple(["x", "y", "z"])
            .ok_or_else(|| Error::PlyHeader("vertex element lacks x, y, z".into()))
    }

    pub fn colors(&self) -> Option<Vec<[f64; 3]>> {
        self.triple(["red", "green", "blue"])
            .or_else(|| self.triple(["r", "g", "b"]))
    }

    pub fn normals(&self) -> Option<Vec<[f64; 3]>> {
        self.triple(["nx", "ny", "nz"])
    }

    /// Voxelises at `depth`. Integer coordinates already inside the grid map
    /// to themselves; anything else is scaled from its enclosing cube.
    pub fn to_cloud(&self, depth: u8) -> Result<VoxelCloud> {
        let pts = self.positions()?;
        if pts.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let side = (1u64 << depth.min(62)) as f64;
        let on_grid = pts
            .iter()
            .all(|p| p.iter().all(|&c| c.fract() == 0.0 && c >= 0.0 && c < side));
        let cube = if on_grid {
            BoundingCube::voxel_grid(depth)
        } else {
            BoundingCube::enclosing(&pts).unwrap()
        };
        let pos = quantize_points(&pts, depth, &cube)?;
        let (dim, attrs) = match self.colors() {
            Some(c) => (3, c.into_iter().flatten().collect()),
            None => (0, Vec::new()),
        };
        let normals = self.normals().and_then(|ns| {
            ns.into_iter()
                .map(|n| {
                    let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
                    (len > 1e-12).then(|| [n[0] / len, n[1] / len, n[2] / len])
                })
                .collect::<Option<Vec<_>>>()
        });
        VoxelCloud::from_unsorted(depth, pos, dim, attrs, normals)
    }

    /// Document for a voxel cloud: float positions, uchar colours when the
    /// cloud has three channels, float normals when present.
    pub fn from_cloud(cloud: &VoxelCloud, format: PlyFormat) -> Self {
        let mut properties = vec![
            ("x".to_string(), ScalarType::F32),
            ("y".to_string(), ScalarType::F32),
            ("z".to_string(), ScalarType::F32),
        ];
        let colors = cloud.attr_dim() == 3;
        if colors {
            for n in ["red", "green", "blue"] {
                properties.push((n.to_string(), ScalarType::U8));
            }
        }
        if cloud.normals().is_some() {
            for n in ["nx", "ny", "nz"] {
                properties.push((n.to_string(), ScalarType::F32));
            }
        }
        let mut values = Vec::with_capacity(cloud.len() * properties.len());
        for i in 0..cloud.len() {
            values.extend(cloud.positions()[i].iter().map(|&c| c as f64));
            if colors {
                values.extend(cloud.attribute(i).iter().map(|&c| c.round().clamp(0.0, 255.0)));
            }
            if let Some(ns) = cloud.normals() {
                values.extend(ns[i].iter().map(|&c| c as f32 as f64));
            }
        }
        Self { format, properties, values }
    }
}

fn header_line<R: BufRead>(r: &mut R) -> Result<String> {
    let mut line = String::new();
    let n = r.read_line(&mut line)?;
    if n == 0 {
        return Err(Error::PlyHeader("unexpected end of header".into()));
    }
    Ok(line.trim_end_matches(['\n', '\r']).to_string())
}

fn parse_header<R: BufRead>(r: &mut R) -> Result<(PlyFormat, Vec<Element>)> {
    if header_line(r)? != "ply" {
        return Err(Error::PlyHeader("missing `ply` magic".into()));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let line = header_line(r)?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.first().copied() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                format = Some(match tok.get(1).copied() {
                    Some("ascii") => PlyFormat::Ascii,
                    Some("binary_little_endian") => PlyFormat::BinaryLittleEndian,
                    Some(other) => return Err(Error::PlyHeader(format!("unsupported format `{other}`"))),
                    None => return Err(Error::PlyHeader("format line without a format".into())),
                });
            }
            Some("element") => {
                if tok.len() != 3 {
                    return Err(Error::PlyHeader(format!("bad element line `{line}`")));
                }
                let count = usize::from_str(tok[2])
                    .map_err(|_| Error::PlyHeader(format!("bad element count `{}`", tok[2])))?;
                elements.push(Element { name: tok[1].to_string(), count, props: Vec::new() });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::PlyHeader("property before any element".into()))?;
                let prop = if tok.get(1) == Some(&"list") {
                    if tok.len() != 5 {
                        return Err(Error::PlyHeader(format!("bad list property `{line}`")));
                    }
                    (tok[4].to_string(), Property::List { count: ScalarType::parse(tok[2])?, item: ScalarType::parse(tok[3])? })
                } else {
                    if tok.len() != 3 {
                        return Err(Error::PlyHeader(format!("bad property line `{line}`")));
                    }
                    (tok[2].to_string(), Property::Scalar(ScalarType::parse(tok[1])?))
                };
                el.props.push(prop);
            }
            Some("end_header") => break,
            Some(other) => return Err(Error::PlyHeader(format!("unknown header keyword `{other}`"))),
        }
    }
    let format = format.ok_or_else(|| Error::PlyHeader("missing format line".into()))?;
    Ok((format, elements))
}

pub fn read_ply_from<R: Read>(reader: R) -> Result<PlyDocument> {
    let mut r = BufReader::new(reader);
    let (format, elements) = parse_header(&mut r)?;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    let mut doc = None;
    match format {
        PlyFormat::Ascii => {
            let text = String::from_utf8_lossy(&body);
            let mut toks = text.split_whitespace();
            let mut next = |what: &str| -> Result<f64> {
                let t = toks.next().ok_or_else(|| Error::PlyTruncated(format!("ran out of values in {what}")))?;
                f64::from_str(t).map_err(|_| Error::PlyTruncated(format!("non-numeric value `{t}` in {what}")))
            };
            for el in &elements {
                let vertex = el.name == "vertex";
                let mut values = Vec::new();
                for _ in 0..el.count {
                    for (_, p) in &el.props {
                        match p {
                            Property::Scalar(_) => {
                                let v = next(&el.name)?;
                                if vertex {
                                    values.push(v);
                                }
                            }
                            Property::List { .. } => {
                                let n = next(&el.name)? as usize;
                                for _ in 0..n {
                                    next(&el.name)?;
                                }
                            }
                        }
                    }
                }
                if vertex {
                    doc = Some(vertex_doc(format, el, values)?);
                }
            }
        }
        PlyFormat::BinaryLittleEndian => {
            let mut pos = 0usize;
            let mut take = |n: usize, what: &str| -> Result<&[u8]> {
                if pos + n > body.len() {
                    return Err(Error::PlyTruncated(format!("payload ends inside {what}")));
                }
                pos += n;
                Ok(&body[pos - n..pos])
            };
            for el in &elements {
                let vertex = el.name == "vertex";
                let mut values = Vec::new();
                for _ in 0..el.count {
                    for (_, p) in &el.props {
                        match *p {
                            Property::Scalar(t) => {
                                let v = t.decode(take(t.size(), &el.name)?);
                                if vertex {
                                    values.push(v);
                                }
                            }
                            Property::List { count, item } => {
                                let n = count.decode(take(count.size(), &el.name)?) as usize;
                                take(n * item.size(), &el.name)?;
                            }
                        }
                    }
                }
                if vertex {
                    doc = Some(vertex_doc(format, el, values)?);
                }
            }
        }
    }
    doc.ok_or_else(|| Error::PlyHeader("no vertex element".into()))
}

fn vertex_doc(format: PlyFormat, el: &Element, values: Vec<f64>) -> Result<PlyDocument> {
    let properties = el
        .props
        .iter()
        .map(|(n, p)| match p {
            Property::Scalar(t) => Ok((n.clone(), *t)),
            Property::List { .. } => Err(Error::PlyUnsupportedType(format!("list property `{n}` on vertex"))),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PlyDocument { format, properties, values })
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<PlyDocument> {
    read_ply_from(std::fs::File::open(path)?)
}

pub fn write_ply_to<W: Write>(doc: &PlyDocument, mut w: W) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(b"ply\n");
    out.extend_from_slice(match doc.format {
        PlyFormat::Ascii => b"format ascii 1.0\n".as_slice(),
        PlyFormat::BinaryLittleEndian => b"format binary_little_endian 1.0\n".as_slice(),
    });
    out.extend_from_slice(format!("element vertex {}\n", doc.len()).as_bytes());
    for (n, t) in &doc.properties {
        out.extend_from_slice(format!("property {} {n}\n", t.name()).as_bytes());
    }
    out.extend_from_slice(b"end_header\n");
    let width = doc.properties.len();
    for row in doc.values.chunks_exact(width.max(1)) {
        match doc.format {
            PlyFormat::Ascii => {
                let line: Vec<String> = row.iter().zip(&doc.properties).map(|(&v, (_, t))| t.format(v)).collect();
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
            PlyFormat::BinaryLittleEndian => {
                for (&v, (_, t)) in row.iter().zip(&doc.properties) {
                    t.encode(v, &mut out);
                }
            }
        }
    }
    w.write_all(&out)?;
    Ok(())
}

pub fn write_ply(doc: &PlyDocument, path: impl AsRef<Path>) -> Result<()> {
    write_ply_to(doc, std::fs::File::create(path)?)
}

/// Reads a PLY file straight into a voxel cloud at `depth`.
pub fn read_cloud(path: impl AsRef<Path>, depth: u8) -> Result<VoxelCloud> {
    read_ply(path)?.to_cloud(depth)
}

pub fn write_cloud(cloud: &VoxelCloud, path: impl AsRef<Path>, format: PlyFormat) -> Result<()> {
    write_ply(&PlyDocument::from_cloud(cloud, format), path)
}

/// True when every integer-typed value fits its declared type.
pub fn values_fit_types(doc: &PlyDocument) -> bool {
    let w = doc.properties.len().max(1);
    doc.values.chunks_exact(w).all(|row| {
        row.iter().zip(&doc.properties).all(|(&v, (_, t))| !t.is_integer() || v.fract() == 0.0)
    })
}
