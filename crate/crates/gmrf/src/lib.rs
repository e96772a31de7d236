//! Sparse precision-matrix algebra for Gaussian Markov random fields.
//!
//! Precision matrices are stored as the upper triangle of a symmetric matrix in
//! compressed-column form. [`cholesky`] computes a fill-reducing sparse
//! factorization which supports solves, log-determinants, marginal variances
//! and selected inversion on the factor pattern.
//!
//! Prior builders cover the three structures used by hierarchical calibration
//! models: iid levels, nested trees of iid levels, and intrinsic conditional
//! autoregressive (ICAR) fields over an adjacency graph.

mod builders;
mod cholesky;
mod error;
mod graph;
mod ordering;
mod precision;

pub use builders::{
    build_iid_precision, build_icar_precision, build_nested_tree_precision, TreeIndex,
};
pub use cholesky::{cholesky, CholeskyFactor, SelectedInverse, SymbolicCholesky};
pub use error::{GmrfError, Result};
pub use graph::AdjacencyGraph;
pub use ordering::minimum_degree_ordering;
pub use precision::{SparsePattern, SparsePrecision};
