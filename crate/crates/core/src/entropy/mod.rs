//! Quantisation and entropy coding shared by the geometry and attribute
//! codecs.

pub mod bits;
pub mod bytecodec;
pub mod quant;
pub mod rans;
pub mod rlgr;

pub use bytecodec::ByteCodec;
pub use quant::Quantizer;
pub use rlgr::{rlgr_decode, rlgr_encode};
