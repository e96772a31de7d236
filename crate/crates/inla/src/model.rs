//! Latent Gaussian model: observations, fixed-effect design, random-effect
//! blocks and the hyperparameter layout.
//!
//! The latent vector is `θ = [fixed coefficients ∥ block deviations]`, in the
//! order the blocks were added. Every hyperparameter is a log precision.

use std::collections::BTreeMap;
use std::sync::Arc;

use gmrf::{
    build_icar_precision, build_iid_precision, build_nested_tree_precision, AdjacencyGraph, SparsePattern,
    SparsePrecision, SymbolicCholesky, TreeIndex,
};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{InlaError, Result};

/// Prior precision of every fixed coefficient (variance 10⁶).
pub const DEFAULT_FIXED_PRECISION: f64 = 1e-6;

/// Jitter added to an ICAR block, relative to the mean of its diagonal, so
/// that the block can be factorized before the sum-to-zero constraint is
/// applied.
pub const ICAR_JITTER: f64 = 1e-6;

/// Prior on one hyperparameter slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HyperPrior {
    /// Gamma(shape, rate) on the precision `τ`, carried over to `log τ`
    /// together with its Jacobian.
    Gamma { shape: f64, rate: f64 },
    /// The slot is held at this log precision and never optimized.
    Fixed { log_precision: f64 },
}

impl Default for HyperPrior {
    fn default() -> Self {
        HyperPrior::Gamma { shape: 1.0, rate: 5e-5 }
    }
}

impl HyperPrior {
    /// Log density of `ψ = log τ`. Fixed slots contribute nothing.
    pub fn log_density(&self, log_tau: f64) -> f64 {
        match *self {
            HyperPrior::Gamma { shape, rate } => {
                shape * rate.ln() - ln_gamma(shape) + shape * log_tau - rate * log_tau.exp()
            }
            HyperPrior::Fixed { .. } => 0.0,
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, HyperPrior::Fixed { .. })
    }

    fn validate(&self) -> Result<()> {
        match *self {
            HyperPrior::Gamma { shape, rate } if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) => {
                Err(InlaError::InvalidHyperparameter(format!("gamma prior needs positive shape and rate, got ({shape}, {rate})")))
            }
            HyperPrior::Fixed { log_precision } if !log_precision.is_finite() => {
                Err(InlaError::InvalidHyperparameter("fixed log precision must be finite".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperSlot {
    pub name: String,
    pub prior: HyperPrior,
}

/// Sparse row vector in θ coordinates, indices strictly increasing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseRow {
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseRow {
    /// Builds a row from `(index, value)` pairs; repeated indices are summed.
    pub fn new(entries: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
        for (i, v) in entries {
            *merged.entry(i).or_insert(0.0) += v;
        }
        let (indices, values) = merged.into_iter().unzip();
        Self { indices, values }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * x[i]).sum()
    }
}

/// Observation → level map of an effect block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Incidence {
    pub index: Vec<usize>,
    pub level_count: usize,
}

/// Dense encoding of group ids: levels are the distinct ids in sorted order.
/// Returns the incidence and the sorted level ids.
pub fn build_incidence<T: Ord + Clone>(ids: &[T]) -> (Incidence, Vec<T>) {
    let mut levels: Vec<T> = ids.to_vec();
    levels.sort();
    levels.dedup();
    let index = ids.iter().map(|id| levels.binary_search(id).expect("id is among levels")).collect();
    (Incidence { index, level_count: levels.len() }, levels)
}

/// Hyperparameter slots of a nested-tree block. With one entry per level the
/// precisions are shared; otherwise `region[k]` is the precision of regions
/// under super-region `k` and `leaf[j]` that of leaves under region `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeSlots {
    pub super_region: usize,
    pub region: Vec<usize>,
    pub leaf: Vec<usize>,
}

impl TreeSlots {
    pub fn shared(super_region: usize, region: usize, leaf: usize) -> Self {
        Self { super_region, region: vec![region], leaf: vec![leaf] }
    }

    fn all(&self) -> Vec<usize> {
        let mut out = vec![self.super_region];
        out.extend(&self.region);
        out.extend(&self.leaf);
        out
    }
}

#[derive(Debug, Clone)]
pub enum BlockKind {
    Iid { levels: usize, slot: usize },
    /// Within-cell intercept deviation; never carries a covariate multiplier.
    GridCell { levels: usize, slot: usize },
    /// Stacked deviations `(δ_SR, δ_R, δ_leaf)`; observations index leaves.
    NestedTree { tree: TreeIndex, slots: TreeSlots },
    /// Intrinsic CAR field over a graph, constrained to sum to zero on every
    /// connected component.
    Icar { graph: AdjacencyGraph, slot: usize },
}

#[derive(Debug, Clone)]
pub struct EffectBlock {
    name: String,
    kind: BlockKind,
    incidence: Vec<usize>,
    multiplier: Option<Vec<f64>>,
}

impl EffectBlock {
    pub fn iid(name: &str, levels: usize, incidence: Vec<usize>, multiplier: Option<Vec<f64>>, slot: usize) -> Self {
        Self { name: name.to_string(), kind: BlockKind::Iid { levels, slot }, incidence, multiplier }
    }

    pub fn grid_cell(name: &str, levels: usize, incidence: Vec<usize>, slot: usize) -> Self {
        Self { name: name.to_string(), kind: BlockKind::GridCell { levels, slot }, incidence, multiplier: None }
    }

    pub fn nested_tree(
        name: &str,
        tree: TreeIndex,
        incidence: Vec<usize>,
        multiplier: Option<Vec<f64>>,
        slots: TreeSlots,
    ) -> Self {
        Self { name: name.to_string(), kind: BlockKind::NestedTree { tree, slots }, incidence, multiplier }
    }

    pub fn icar(
        name: &str,
        graph: AdjacencyGraph,
        incidence: Vec<usize>,
        multiplier: Option<Vec<f64>>,
        slot: usize,
    ) -> Self {
        Self { name: name.to_string(), kind: BlockKind::Icar { graph, slot }, incidence, multiplier }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &BlockKind {
        &self.kind
    }

    pub fn incidence(&self) -> &[usize] {
        &self.incidence
    }

    pub fn multiplier(&self) -> Option<&[f64]> {
        self.multiplier.as_deref()
    }

    /// Number of levels observations can map to.
    pub fn level_count(&self) -> usize {
        match &self.kind {
            BlockKind::Iid { levels, .. } | BlockKind::GridCell { levels, .. } => *levels,
            BlockKind::NestedTree { tree, .. } => tree.leaf_count(),
            BlockKind::Icar { graph, .. } => graph.len(),
        }
    }

    /// Number of latent coordinates the block contributes to θ.
    pub fn dim(&self) -> usize {
        match &self.kind {
            BlockKind::NestedTree { tree, .. } => tree.stacked_len(),
            _ => self.level_count(),
        }
    }

    pub fn slots(&self) -> Vec<usize> {
        match &self.kind {
            BlockKind::Iid { slot, .. } | BlockKind::GridCell { slot, .. } | BlockKind::Icar { slot, .. } => vec![*slot],
            BlockKind::NestedTree { slots, .. } => slots.all(),
        }
    }

    /// Block-local coordinates whose sum gives the effect at `level`.
    pub fn level_columns(&self, level: usize) -> Vec<usize> {
        match &self.kind {
            BlockKind::NestedTree { tree, .. } => tree.path(level),
            _ => vec![level],
        }
    }

    /// Block prior precision at hyperparameters `psi`.
    pub fn precision(&self, psi: &[f64]) -> Result<SparsePrecision> {
        let tau = |slot: usize| psi[slot].exp();
        Ok(match &self.kind {
            BlockKind::Iid { levels, slot } | BlockKind::GridCell { levels, slot } => build_iid_precision(*levels, tau(*slot))?,
            BlockKind::NestedTree { tree, slots } => {
                if slots.region.len() == 1 && slots.leaf.len() == 1 {
                    build_nested_tree_precision(tree, &[tau(slots.super_region), tau(slots.region[0]), tau(slots.leaf[0])])?
                } else {
                    let mut diag = vec![tau(slots.super_region); tree.super_count()];
                    diag.extend((0..tree.region_count()).map(|r| tau(slots.region[tree.super_of_region(r)])));
                    diag.extend((0..tree.leaf_count()).map(|c| tau(slots.leaf[tree.region_of(c)])));
                    SparsePrecision::diagonal(&diag)?
                }
            }
            BlockKind::Icar { graph, slot } => {
                let q = build_icar_precision(graph, 1.0 / tau(*slot))?;
                let diag = q.diag();
                let mean = diag.iter().sum::<f64>() / diag.len() as f64;
                // A graph without edges has a zero diagonal; fall back to τ.
                let scale = if mean > 0.0 { mean } else { tau(*slot) };
                let n = diag.len();
                let mut triplets: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, ICAR_JITTER * scale)).collect();
                // κ·11ᵀ per connected component vanishes on the sum-to-zero
                // surface, so the constrained law is unchanged, but the
                // constant modes no longer carry near-infinite variance that
                // the constraint correction would have to cancel.
                for comp in graph.connected_components() {
                    let kappa = scale / comp.len() as f64;
                    for (a, &i) in comp.iter().enumerate() {
                        for &j in &comp[a..] {
                            triplets.push((i.min(j), i.max(j), kappa));
                        }
                    }
                }
                q.add(&SparsePrecision::from_triplets(n, triplets)?)?
            }
        })
    }

    /// Sum-to-zero constraint sets (block-local coordinates).
    fn constraint_sets(&self) -> Vec<Vec<usize>> {
        match &self.kind {
            BlockKind::Icar { graph, .. } => graph.connected_components(),
            _ => Vec::new(),
        }
    }

    fn validate(&self, n_obs: usize, n_slots: usize) -> Result<()> {
        let bad = |msg: String| Err(InlaError::InvalidModel(format!("block {:?}: {msg}", self.name)));
        if self.incidence.len() != n_obs {
            return bad(format!("incidence has {} entries for {n_obs} observations", self.incidence.len()));
        }
        let levels = self.level_count();
        if levels == 0 {
            return bad("block has no levels".into());
        }
        if let Some((s, &l)) = self.incidence.iter().enumerate().find(|(_, &l)| l >= levels) {
            return bad(format!("observation {s} maps to level {l} outside 0..{levels}"));
        }
        if let Some(m) = &self.multiplier {
            if matches!(self.kind, BlockKind::GridCell { .. }) {
                return bad("grid-cell effects apply to the intercept only".into());
            }
            if m.len() != n_obs {
                return bad(format!("multiplier has {} entries for {n_obs} observations", m.len()));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return bad("multiplier contains non-finite values".into());
            }
        }
        if let BlockKind::NestedTree { tree, slots } = &self.kind {
            if !(slots.region.len() == 1 || slots.region.len() == tree.super_count()) {
                return bad("region slots must be shared or one per super-region".into());
            }
            if !(slots.leaf.len() == 1 || slots.leaf.len() == tree.region_count()) {
                return bad("leaf slots must be shared or one per region".into());
            }
        }
        if let Some(s) = self.slots().into_iter().find(|&s| s >= n_slots) {
            return bad(format!("hyperparameter slot {s} outside 0..{n_slots}"));
        }
        Ok(())
    }
}

/// Incrementally assembles a [`LatentGaussianModel`].
#[derive(Debug, Clone)]
pub struct ModelBuilder {
    y: Vec<f64>,
    offset: Option<Vec<f64>>,
    fixed_names: Vec<String>,
    fixed_columns: Vec<Vec<f64>>,
    blocks: Vec<EffectBlock>,
    slots: Vec<HyperSlot>,
    noise_slot: Option<usize>,
    fixed_precision: f64,
    extra_cliques: Vec<Vec<usize>>,
}

impl ModelBuilder {
    pub fn new(y: Vec<f64>) -> Self {
        Self {
            y,
            offset: None,
            fixed_names: Vec::new(),
            fixed_columns: Vec::new(),
            blocks: Vec::new(),
            slots: Vec::new(),
            noise_slot: None,
            fixed_precision: DEFAULT_FIXED_PRECISION,
            extra_cliques: Vec::new(),
        }
    }

    /// Declares a hyperparameter slot and returns its index in ψ.
    pub fn add_slot(&mut self, name: &str, prior: HyperPrior) -> usize {
        self.slots.push(HyperSlot { name: name.to_string(), prior });
        self.slots.len() - 1
    }

    /// Declares the observation-noise precision slot.
    pub fn add_noise_slot(&mut self, prior: HyperPrior) -> usize {
        let slot = self.add_slot("noise", prior);
        self.noise_slot = Some(slot);
        slot
    }

    pub fn add_fixed(&mut self, name: &str, column: Vec<f64>) -> &mut Self {
        self.fixed_names.push(name.to_string());
        self.fixed_columns.push(column);
        self
    }

    pub fn add_intercept(&mut self) -> &mut Self {
        let n = self.y.len();
        self.add_fixed("intercept", vec![1.0; n])
    }

    pub fn add_block(&mut self, block: EffectBlock) -> &mut Self {
        self.blocks.push(block);
        self
    }

    /// Known additive term in the predictor.
    pub fn set_offset(&mut self, offset: Vec<f64>) -> &mut Self {
        self.offset = Some(offset);
        self
    }

    pub fn set_fixed_precision(&mut self, precision: f64) -> &mut Self {
        self.fixed_precision = precision;
        self
    }

    /// Registers θ coordinates that will later appear together in a linear
    /// combination (e.g. a prediction row), so that their joint posterior
    /// covariance is available from the selected inverse.
    pub fn add_clique(&mut self, theta_indices: Vec<usize>) -> &mut Self {
        self.extra_cliques.push(theta_indices);
        self
    }

    pub fn theta_dim(&self) -> usize {
        self.fixed_columns.len() + self.blocks.iter().map(EffectBlock::dim).sum::<usize>()
    }

    pub fn build(self) -> Result<LatentGaussianModel> {
        let n_obs = self.y.len();
        if n_obs == 0 {
            return Err(InlaError::InvalidModel("model needs at least one observation".into()));
        }
        if let Some(s) = self.y.iter().position(|v| !v.is_finite()) {
            return Err(InlaError::InvalidModel(format!("observation {s} is not finite")));
        }
        let noise_slot = self.noise_slot.ok_or_else(|| InlaError::InvalidModel("no noise precision slot declared".into()))?;
        for slot in &self.slots {
            slot.prior.validate()?;
        }
        if !(self.fixed_precision > 0.0 && self.fixed_precision.is_finite()) {
            return Err(InlaError::InvalidModel("fixed-effect prior precision must be positive".into()));
        }
        for (name, col) in self.fixed_names.iter().zip(&self.fixed_columns) {
            if col.len() != n_obs {
                return Err(InlaError::InvalidModel(format!("fixed column {name:?} has {} rows for {n_obs} observations", col.len())));
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(InlaError::InvalidModel(format!("fixed column {name:?} contains non-finite values")));
            }
        }
        let offset = self.offset.unwrap_or_else(|| vec![0.0; n_obs]);
        if offset.len() != n_obs {
            return Err(InlaError::DimensionMismatch { expected: n_obs, found: offset.len() });
        }
        for block in &self.blocks {
            block.validate(n_obs, self.slots.len())?;
        }

        let n_fixed = self.fixed_columns.len();
        let mut block_offsets = Vec::with_capacity(self.blocks.len());
        let mut next = n_fixed;
        for b in &self.blocks {
            block_offsets.push(next);
            next += b.dim();
        }
        let theta_dim = next;
        for clique in &self.extra_cliques {
            if let Some(&i) = clique.iter().find(|&&i| i >= theta_dim) {
                return Err(InlaError::InvalidModel(format!("clique index {i} outside θ dimension {theta_dim}")));
            }
        }

        let mut fixed_design = vec![0.0; n_obs * n_fixed];
        for (k, col) in self.fixed_columns.iter().enumerate() {
            for (s, v) in col.iter().enumerate() {
                fixed_design[s * n_fixed + k] = *v;
            }
        }

        let mut model = LatentGaussianModel {
            y: self.y,
            offset,
            fixed_names: self.fixed_names,
            fixed_design,
            n_fixed,
            blocks: self.blocks,
            block_offsets,
            slots: self.slots,
            noise_slot,
            fixed_precision: self.fixed_precision,
            structure: Arc::new(Structure::default()),
        };
        model.structure = Arc::new(Structure::build(&model, &self.extra_cliques)?);
        Ok(model)
    }
}

/// Precomputed sparsity structure shared by every evaluation of one model.
#[derive(Debug, Default)]
pub(crate) struct Structure {
    pub rows: Vec<SparseRow>,
    pub prior_symbolic: Option<Arc<SymbolicCholesky>>,
    /// Position in the posterior pattern of each prior-pattern entry.
    pub prior_to_post: Vec<usize>,
    pub post_pattern: Option<Arc<SparsePattern>>,
    pub post_symbolic: Option<Arc<SymbolicCholesky>>,
    /// `AᵀA` on the posterior pattern.
    pub ata: Vec<f64>,
    /// Sum-to-zero constraints as sets of θ indices.
    pub constraints: Vec<Vec<usize>>,
}

impl Structure {
    fn build(model: &LatentGaussianModel, extra_cliques: &[Vec<usize>]) -> Result<Self> {
        let n = model.theta_dim();
        let rows: Vec<SparseRow> = (0..model.n_obs()).map(|s| model.compute_design_row(s)).collect();

        let reference_psi = vec![0.0; model.n_slots()];
        let prior = model.assemble_prior_precision(&reference_psi)?;
        let prior_pattern = Arc::clone(prior.pattern());

        let mut coords: Vec<(usize, usize)> = prior_pattern.coordinates().collect();
        for row in &rows {
            let idx = row.indices();
            for (a, &i) in idx.iter().enumerate() {
                coords.extend(idx[a..].iter().map(|&j| (i, j)));
            }
        }
        for clique in extra_cliques {
            for (a, &i) in clique.iter().enumerate() {
                coords.extend(clique[a..].iter().map(|&j| (i, j)));
            }
        }
        let post_pattern = Arc::new(SparsePattern::from_coordinates(n, coords)?);
        let prior_to_post = prior_pattern
            .coordinates()
            .map(|(r, c)| post_pattern.position(r, c).expect("prior entries are in the posterior pattern"))
            .collect();

        let mut ata = vec![0.0; post_pattern.nnz()];
        for row in &rows {
            let idx = row.indices();
            let val = row.values();
            for a in 0..idx.len() {
                for b in a..idx.len() {
                    let p = post_pattern.position(idx[a], idx[b]).expect("row cliques are in the pattern");
                    ata[p] += val[a] * val[b];
                }
            }
        }

        let mut constraints = Vec::new();
        for (b, block) in model.blocks.iter().enumerate() {
            let off = model.block_offsets[b];
            for set in block.constraint_sets() {
                constraints.push(set.into_iter().map(|i| i + off).collect());
            }
        }

        Ok(Self {
            rows,
            prior_symbolic: Some(SymbolicCholesky::analyze(&prior_pattern)),
            prior_to_post,
            post_symbolic: Some(SymbolicCholesky::analyze(&post_pattern)),
            post_pattern: Some(post_pattern),
            ata,
            constraints,
        })
    }
}

/// An assembled latent Gaussian model. Immutable; cheap to clone.
#[derive(Debug, Clone)]
pub struct LatentGaussianModel {
    y: Vec<f64>,
    offset: Vec<f64>,
    fixed_names: Vec<String>,
    fixed_design: Vec<f64>,
    n_fixed: usize,
    blocks: Vec<EffectBlock>,
    block_offsets: Vec<usize>,
    slots: Vec<HyperSlot>,
    noise_slot: usize,
    fixed_precision: f64,
    pub(crate) structure: Arc<Structure>,
}

impl LatentGaussianModel {
    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn n_fixed(&self) -> usize {
        self.n_fixed
    }

    pub fn fixed_names(&self) -> &[String] {
        &self.fixed_names
    }

    /// Fixed-effect covariate value of observation `s`, column `k`.
    pub fn fixed_value(&self, s: usize, k: usize) -> f64 {
        self.fixed_design[s * self.n_fixed + k]
    }

    pub fn blocks(&self) -> &[EffectBlock] {
        &self.blocks
    }

    /// Offset of block `b` within θ.
    pub fn block_offset(&self, b: usize) -> usize {
        self.block_offsets[b]
    }

    pub fn block_index(&self, name: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.name == name)
    }

    pub fn theta_dim(&self) -> usize {
        self.n_fixed + self.blocks.iter().map(EffectBlock::dim).sum::<usize>()
    }

    pub fn slots(&self) -> &[HyperSlot] {
        &self.slots
    }

    pub fn n_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn noise_slot(&self) -> usize {
        self.noise_slot
    }

    pub fn fixed_precision(&self) -> f64 {
        self.fixed_precision
    }

    /// Slots that are optimized (not held fixed by their prior).
    pub fn free_slots(&self) -> Vec<usize> {
        (0..self.slots.len()).filter(|&k| !self.slots[k].prior.is_fixed()).collect()
    }

    /// Row `s` of the full θ → η design.
    pub fn design_row(&self, s: usize) -> &SparseRow {
        &self.structure.rows[s]
    }

    /// Sum-to-zero constraints as sets of θ indices.
    pub fn constraints(&self) -> &[Vec<usize>] {
        &self.structure.constraints
    }

    /// Design row for arbitrary covariates: `fixed` holds one value per fixed
    /// column, `effects` one optional `(level, multiplier)` per block.
    pub fn design_row_from(&self, fixed: &[f64], effects: &[Option<(usize, f64)>]) -> Result<SparseRow> {
        if fixed.len() != self.n_fixed {
            return Err(InlaError::DimensionMismatch { expected: self.n_fixed, found: fixed.len() });
        }
        if effects.len() != self.blocks.len() {
            return Err(InlaError::DimensionMismatch { expected: self.blocks.len(), found: effects.len() });
        }
        let mut entries: Vec<(usize, f64)> = fixed.iter().enumerate().map(|(k, &v)| (k, v)).collect();
        for (b, effect) in effects.iter().enumerate() {
            if let Some((level, mult)) = *effect {
                let block = &self.blocks[b];
                if level >= block.level_count() {
                    return Err(InlaError::InvalidArgument(format!(
                        "level {level} outside block {:?} with {} levels",
                        block.name,
                        block.level_count()
                    )));
                }
                let off = self.block_offsets[b];
                entries.extend(block.level_columns(level).into_iter().map(|c| (off + c, mult)));
            }
        }
        Ok(SparseRow::new(entries))
    }

    fn compute_design_row(&self, s: usize) -> SparseRow {
        let effects: Vec<Option<(usize, f64)>> = self
            .blocks
            .iter()
            .map(|b| Some((b.incidence[s], b.multiplier.as_ref().map_or(1.0, |m| m[s]))))
            .collect();
        let fixed = &self.fixed_design[s * self.n_fixed..(s + 1) * self.n_fixed];
        self.design_row_from(fixed, &effects).expect("validated at build")
    }

    pub fn check_psi(&self, psi: &[f64]) -> Result<()> {
        if psi.len() != self.slots.len() {
            return Err(InlaError::SlotMismatch { expected: self.slots.len(), found: psi.len() });
        }
        if let Some(k) = psi.iter().position(|v| !v.is_finite()) {
            return Err(InlaError::InvalidHyperparameter(format!("slot {k} ({}) is not finite", self.slots[k].name)));
        }
        Ok(())
    }

    /// Block-diagonal prior precision of θ: `τ_fixed · I` for the fixed
    /// coefficients, then each block's precision at `psi`.
    pub fn assemble_prior_precision(&self, psi: &[f64]) -> Result<SparsePrecision> {
        self.check_psi(psi)?;
        let fixed = SparsePrecision::diagonal(&vec![self.fixed_precision; self.n_fixed])?;
        let mut parts = vec![fixed];
        for b in &self.blocks {
            parts.push(b.precision(psi)?);
        }
        let refs: Vec<&SparsePrecision> = parts.iter().collect();
        Ok(SparsePrecision::block_diag(&refs)?)
    }

    /// `η = offset + A θ`.
    pub fn linear_predictor(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.theta_dim() {
            return Err(InlaError::DimensionMismatch { expected: self.theta_dim(), found: theta.len() });
        }
        Ok(self.structure.rows.iter().zip(&self.offset).map(|(row, o)| o + row.dot(theta)).collect())
    }

    /// Prior log density of ψ summed over slots.
    pub fn log_hyper_prior(&self, psi: &[f64]) -> f64 {
        self.slots.iter().zip(psi).map(|(s, &v)| s.prior.log_density(v)).sum()
    }

    /// ψ with every fixed slot replaced by its pinned value.
    pub fn pin_fixed_slots(&self, psi: &mut [f64]) {
        for (slot, v) in self.slots.iter().zip(psi.iter_mut()) {
            if let HyperPrior::Fixed { log_precision } = slot.prior {
                *v = log_precision;
            }
        }
    }
}

/// Gaussian log likelihood `Σ_s [½ log(τ/2π) − ½ τ (y_s − η_s)²]`.
pub fn gaussian_loglik(y: &[f64], eta: &[f64], tau_eps: f64) -> Result<f64> {
    if y.len() != eta.len() {
        return Err(InlaError::DimensionMismatch { expected: y.len(), found: eta.len() });
    }
    if !(tau_eps > 0.0 && tau_eps.is_finite()) {
        return Err(InlaError::InvalidHyperparameter(format!("noise precision must be positive, got {tau_eps}")));
    }
    let ss: f64 = y.iter().zip(eta).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(0.5 * y.len() as f64 * (tau_eps / (2.0 * std::f64::consts::PI)).ln() - 0.5 * tau_eps * ss)
}
