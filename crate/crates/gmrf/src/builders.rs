use crate::error::{GmrfError, Result};
use crate::graph::AdjacencyGraph;
use crate::precision::SparsePrecision;

/// Index maps of a three-level nested hierarchy: leaves (countries) within
/// regions within super-regions.
///
/// A merged region is one that coincides with its super-region; its
/// region-level deviation is carried by the model but never referenced by
/// observations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeIndex {
    leaf_parent: Vec<usize>,
    region_parent: Vec<usize>,
    super_count: usize,
    merged: Vec<bool>,
}

impl TreeIndex {
    pub fn new(leaf_parent: Vec<usize>, region_parent: Vec<usize>, super_count: usize) -> Result<Self> {
        let merged = vec![false; region_parent.len()];
        Self::with_merged(leaf_parent, region_parent, super_count, merged)
    }

    pub fn with_merged(
        leaf_parent: Vec<usize>,
        region_parent: Vec<usize>,
        super_count: usize,
        merged: Vec<bool>,
    ) -> Result<Self> {
        if merged.len() != region_parent.len() {
            return Err(GmrfError::InvalidHierarchy(format!(
                "{} merge flags for {} regions",
                merged.len(),
                region_parent.len()
            )));
        }
        for (leaf, &r) in leaf_parent.iter().enumerate() {
            if r >= region_parent.len() {
                return Err(GmrfError::InvalidHierarchy(format!(
                    "leaf {leaf} is orphaned: region {r} does not exist"
                )));
            }
        }
        for (region, &s) in region_parent.iter().enumerate() {
            if s >= super_count {
                return Err(GmrfError::InvalidHierarchy(format!(
                    "region {region} is orphaned: super-region {s} does not exist"
                )));
            }
        }
        Ok(Self { leaf_parent, region_parent, super_count, merged })
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_parent.len()
    }

    pub fn region_count(&self) -> usize {
        self.region_parent.len()
    }

    pub fn super_count(&self) -> usize {
        self.super_count
    }

    /// Length of the stacked deviation vector `(δ_SR, δ_R, δ_leaf)`.
    pub fn stacked_len(&self) -> usize {
        self.super_count + self.region_count() + self.leaf_count()
    }

    pub fn region_of(&self, leaf: usize) -> usize {
        self.leaf_parent[leaf]
    }

    pub fn super_of_region(&self, region: usize) -> usize {
        self.region_parent[region]
    }

    pub fn super_of(&self, leaf: usize) -> usize {
        self.region_parent[self.leaf_parent[leaf]]
    }

    pub fn is_merged(&self, region: usize) -> bool {
        self.merged[region]
    }

    /// Positions in the stacked vector that contribute to a leaf's composed
    /// coefficient: its super-region, its region (unless merged) and itself.
    pub fn path(&self, leaf: usize) -> Vec<usize> {
        let region = self.leaf_parent[leaf];
        let sup = self.region_parent[region];
        let mut out = vec![sup];
        if !self.merged[region] {
            out.push(self.super_count + region);
        }
        out.push(self.super_count + self.region_count() + leaf);
        out
    }
}

/// `tau · I_n`: iid Normal deviations with precision `tau`.
pub fn build_iid_precision(n: usize, tau: f64) -> Result<SparsePrecision> {
    if n == 0 {
        return Err(GmrfError::InvalidMatrix("iid block needs at least one level".into()));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(GmrfError::InvalidHyperparameter(format!("precision must be positive and finite, got {tau}")));
    }
    SparsePrecision::diagonal(&vec![tau; n])
}

/// Joint precision `(D − A) / ψ²` of an intrinsic CAR field, where `D` holds
/// neighbor counts and `A` is the adjacency matrix. The implied full
/// conditional of node `i` is Normal with the mean of its neighbors and
/// variance `ψ² / N_∂i`. The result is singular (rows sum to zero).
pub fn build_icar_precision(graph: &AdjacencyGraph, psi2: f64) -> Result<SparsePrecision> {
    if !(psi2 > 0.0 && psi2.is_finite()) {
        return Err(GmrfError::InvalidHyperparameter(format!("ICAR variance must be positive and finite, got {psi2}")));
    }
    let n = graph.len();
    let max_degree = (0..n).map(|i| graph.degree(i)).max().unwrap_or(0);
    // Clearing the low mantissa bits of 1/ψ² makes every multiple k/ψ² with
    // k ≤ degree exactly representable, so rows sum to exactly zero in any
    // summation order. The relative change to ψ² is below 1e-13.
    let free_bits = (usize::BITS - max_degree.leading_zeros()).min(20);
    let w = f64::from_bits((1.0 / psi2).to_bits() & !((1u64 << free_bits) - 1));
    let mut triplets = Vec::with_capacity(n + graph.edge_count());
    for i in 0..n {
        for &j in graph.neighbors(i) {
            if !graph.neighbors(j).contains(&i) {
                return Err(GmrfError::InvalidGraph(format!("asymmetric adjacency between {i} and {j}")));
            }
        }
        triplets.push((i, i, graph.degree(i) as f64 * w));
    }
    for (a, b) in graph.edges() {
        triplets.push((a, b, -w));
    }
    SparsePrecision::from_triplets(n, triplets)
}

/// Block-diagonal precision of stacked level deviations `(δ_SR, δ_R, δ_leaf)`
/// with per-level precisions `taus = [τ_SR, τ_R, τ_leaf]`.
///
/// The deviations are independent and zero-mean; a leaf's coefficient is the
/// sum along [`TreeIndex::path`]. That is the same joint law as the centered
/// statement `β_leaf ~ N(β_R, σ²_leaf)`, `β_R ~ N(β_SR, σ²_R)`,
/// `β_SR ~ N(β, σ²_SR)`.
pub fn build_nested_tree_precision(tree: &TreeIndex, taus: &[f64]) -> Result<SparsePrecision> {
    if taus.len() != 3 {
        return Err(GmrfError::InvalidHyperparameter(format!("expected 3 level precisions, got {}", taus.len())));
    }
    let mut diag = Vec::with_capacity(tree.stacked_len());
    for (count, &tau) in [tree.super_count(), tree.region_count(), tree.leaf_count()].iter().zip(taus) {
        if *count == 0 {
            return Err(GmrfError::InvalidHierarchy("every tree level needs at least one node".into()));
        }
        let block = build_iid_precision(*count, tau)?;
        diag.extend(block.diag());
    }
    SparsePrecision::diagonal(&diag)
}
