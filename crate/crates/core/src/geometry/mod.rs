//! Geometry coding: pruned octree, corner signed distances and in-loop
//! quantised prediction of the controls.

pub mod codec;
pub mod inloop;
pub mod normals;
pub mod prune;
pub mod sdf;
pub mod tree;

pub use codec::{decode_geometry, encode_geometry, DecodedGeometry, EncodedGeometry, GeometryConfig, GeometryEncoder, GeometryReport, Reconstruct};
pub use normals::{ensure_normals, estimate_normals, NormalEstimate};
pub use prune::Pruning;
pub use tree::PrunedOctree;
