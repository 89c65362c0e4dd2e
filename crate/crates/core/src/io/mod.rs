//! File formats and synthetic inputs.

pub mod ply;
pub mod synth;

pub use ply::{read_cloud, read_ply, write_cloud, write_ply, PlyDocument, PlyFormat, ScalarType};
pub use synth::{synth_cloud, ColorField, Shape};
