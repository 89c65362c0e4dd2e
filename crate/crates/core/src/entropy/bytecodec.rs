//! Container byte-compressor stage.

use std::io::{Read, Write};

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ByteCodec {
    Identity,
    #[default]
    Deflate,
}

impl ByteCodec {
    pub fn id(self) -> u8 {
        match self {
            ByteCodec::Identity => 0,
            ByteCodec::Deflate => 1,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(ByteCodec::Identity),
            1 => Ok(ByteCodec::Deflate),
            other => Err(Error::UnknownCodec(other)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ByteCodec::Identity => "identity",
            ByteCodec::Deflate => "deflate",
        }
    }

    pub fn compress(self, data: &[u8]) -> Result<Vec<u8>> {
        match self {
            ByteCodec::Identity => Ok(data.to_vec()),
            ByteCodec::Deflate => {
                let mut enc = DeflateEncoder::new(Vec::new(), Compression::best());
                enc.write_all(data)?;
                Ok(enc.finish()?)
            }
        }
    }

    pub fn decompress(self, data: &[u8]) -> Result<Vec<u8>> {
        match self {
            ByteCodec::Identity => Ok(data.to_vec()),
            ByteCodec::Deflate => {
                let mut out = Vec::new();
                DeflateDecoder::new(data)
                    .read_to_end(&mut out)
                    .map_err(|e| Error::Corrupt(format!("deflate: {e}")))?;
                Ok(out)
            }
        }
    }
}

impl std::str::FromStr for ByteCodec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "none" | "0" => Ok(ByteCodec::Identity),
            "deflate" | "1" => Ok(ByteCodec::Deflate),
            other => Err(Error::InvalidParameter(format!("unknown byte codec `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ids() {
        assert_eq!(ByteCodec::from_id(0).unwrap(), ByteCodec::Identity);
        assert!(matches!(ByteCodec::from_id(9), Err(Error::UnknownCodec(9))));
    }

    #[test]
    fn repeated_bytes_shrink_below_one_percent() {
        let data = vec![0xabu8; 10_000];
        let c = ByteCodec::Deflate.compress(&data).unwrap();
        assert!(c.len() < 100, "{}", c.len());
        assert_eq!(ByteCodec::Deflate.decompress(&c).unwrap(), data);
    }

    proptest! {
        #[test]
        fn roundtrip(data in prop::collection::vec(any::<u8>(), 0..2000)) {
            for codec in [ByteCodec::Identity, ByteCodec::Deflate] {
                let c = codec.compress(&data).unwrap();
                prop_assert_eq!(codec.decompress(&c).unwrap(), data.clone());
            }
        }
    }
}
