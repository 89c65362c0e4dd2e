//! Sparse matrices, rank-revealing sparse Cholesky and conjugate gradients,
//! plus small dense helpers built on nalgebra.

pub mod dense;
pub mod sparse;

pub use sparse::{connected_components, conjugate_gradient, nested_dissection, Csr, SparseCholesky, UnionFind};
