//! Volumetric B-spline point cloud coding.
//!
//! Geometry is coded as a signed distance field sampled on the corners of an
//! adaptive octree and quantised in-loop; the decoder rebuilds voxels from the
//! zero crossing of the tri-linear volume. Attributes are coded with either
//! the region-adaptive Haar transform or an orthonormal Bezier-volume
//! transform built on the counting measure of the voxel cloud.

pub mod attributes;
pub mod bv;
pub mod color;
pub mod container;
pub mod entropy;
pub mod error;
pub mod geometry;
pub mod hilbert;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod raht;
pub mod spatial;
pub mod surface;
pub mod voxel;

pub use error::{Error, Result};
pub use voxel::{morton_decode, morton_encode, voxelize, BoundingCube, OctreeLevels, Voxel, VoxelCloud};
