//! Sectioned container shared by the geometry and attribute streams.
//!
//! Layout, little-endian: magic (4 bytes), version `u8`, depth `u8`, start
//! level `u8`, stepsize `f64`, byte-codec id `u8`, five `u32` section
//! lengths, then the five sections, each passed through the byte codec.
//! Empty sections stay empty.

use crate::entropy::bits::{ByteReader, ByteWriter};
use crate::entropy::ByteCodec;
use crate::error::{Error, Result};

pub const VERSION: u8 = 1;
pub const NUM_SECTIONS: usize = 5;
pub const HEADER_BYTES: usize = 4 + 1 + 1 + 1 + 8 + 1 + 4 * NUM_SECTIONS;

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub magic: [u8; 4],
    pub depth: u8,
    pub start: u8,
    pub qstep: f64,
    pub codec: ByteCodec,
    /// Uncompressed section payloads.
    pub sections: [Vec<u8>; NUM_SECTIONS],
}

/// Byte accounting of a written container.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectionSizes {
    pub header: usize,
    /// Stored (compressed) length of each section.
    pub sections: [usize; NUM_SECTIONS],
}

impl SectionSizes {
    pub fn total(&self) -> usize {
        self.header + self.sections.iter().sum::<usize>()
    }
}

impl Container {
    pub fn to_bytes(&self) -> Result<(Vec<u8>, SectionSizes)> {
        let stored: Vec<Vec<u8>> = self
            .sections
            .iter()
            .map(|s| if s.is_empty() { Ok(Vec::new()) } else { self.codec.compress(s) })
            .collect::<Result<_>>()?;
        let mut w = ByteWriter::new();
        w.bytes(&self.magic);
        w.u8(VERSION);
        w.u8(self.depth);
        w.u8(self.start);
        w.f64(self.qstep);
        w.u8(self.codec.id());
        for s in &stored {
            let len = u32::try_from(s.len()).map_err(|_| Error::InvalidParameter("section over 4 GiB".into()))?;
            w.u32(len);
        }
        for s in &stored {
            w.bytes(s);
        }
        let sizes = SectionSizes { header: HEADER_BYTES, sections: std::array::from_fn(|i| stored[i].len()) };
        Ok((w.into_inner(), sizes))
    }

    pub fn from_bytes(bytes: &[u8], magic: [u8; 4]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "container header");
        if r.take(4)? != magic || r.u8()? != VERSION {
            return Err(Error::BadMagic);
        }
        let depth = r.u8()?;
        let start = r.u8()?;
        let qstep = r.f64()?;
        let codec = ByteCodec::from_id(r.u8()?)?;
        let mut lens = [0usize; NUM_SECTIONS];
        for l in lens.iter_mut() {
            *l = r.u32()? as usize;
        }
        let mut sections: [Vec<u8>; NUM_SECTIONS] = Default::default();
        for (s, &len) in sections.iter_mut().zip(&lens) {
            if len > r.remaining() {
                return Err(Error::Truncated("container section"));
            }
            let raw = r.take(len)?;
            *s = if raw.is_empty() { Vec::new() } else { codec.decompress(raw)? };
        }
        if !r.is_empty() {
            return Err(Error::Corrupt(format!("{} trailing bytes after the last section", r.remaining())));
        }
        Ok(Self { magic, depth, start, qstep, codec, sections })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(codec: ByteCodec) -> Container {
        Container {
            magic: *b"TEST",
            depth: 7,
            start: 2,
            qstep: 1.5,
            codec,
            sections: [vec![1, 2, 3], vec![], vec![9; 100], vec![0], vec![7, 7]],
        }
    }

    #[test]
    fn round_trip_and_accounting() {
        for codec in [ByteCodec::Identity, ByteCodec::Deflate] {
            let c = sample(codec);
            let (bytes, sizes) = c.to_bytes().unwrap();
            assert_eq!(sizes.total(), bytes.len());
            assert_eq!(sizes.sections[1], 0);
            assert_eq!(Container::from_bytes(&bytes, *b"TEST").unwrap(), c);
        }
    }

    #[test]
    fn rejects_damage() {
        let (bytes, _) = sample(ByteCodec::Identity).to_bytes().unwrap();
        assert!(matches!(Container::from_bytes(&bytes, *b"NOPE"), Err(Error::BadMagic)));
        let mut v = bytes.clone();
        v[4] = 99;
        assert!(matches!(Container::from_bytes(&v, *b"TEST"), Err(Error::BadMagic)));
        assert!(Container::from_bytes(&bytes[..bytes.len() - 1], *b"TEST").is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(Container::from_bytes(&long, *b"TEST").is_err());
        let mut codec = bytes;
        codec[15] = 42;
        assert!(matches!(Container::from_bytes(&codec, *b"TEST"), Err(Error::UnknownCodec(42))));
    }
}
