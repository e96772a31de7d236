//! Candidate model variants and their construction as latent Gaussian
//! models over monitors.
//!
//! The log concentration at a monitor is a fixed calibration (intercept,
//! network indicators X1–X3, gridded covariates and indicator × covariate
//! interactions) plus random deviations: a within-cell effect, a nested
//! super-region/region/country intercept, nested slopes on the satellite
//! (and chemical-transport) estimates, and a country-level ICAR slope on
//! population. Covariates are standardized over the monitors a model is
//! built from.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use inla::{EffectBlock, HyperPrior, LatentGaussianModel, ModelBuilder, SparseRow, TreeSlots, DEFAULT_FIXED_PRECISION};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GridCellRecord, MonitorRecord, Pollutant};
use crate::error::{DimaqError, Result};

/// Cell-level covariates X4–X9.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Covariate {
    X4,
    X5,
    X6,
    X7,
    X8,
    X9,
}

impl Covariate {
    pub const ALL: [Covariate; 6] = [Covariate::X4, Covariate::X5, Covariate::X6, Covariate::X7, Covariate::X8, Covariate::X9];

    pub fn value(self, cell: &GridCellRecord) -> f64 {
        match self {
            Covariate::X4 => cell.x4_sat,
            Covariate::X5 => cell.x5_tm5,
            Covariate::X6 => cell.x6_dust,
            Covariate::X7 => cell.x7_snaoc,
            Covariate::X8 => cell.x8_pop,
            Covariate::X9 => cell.x9_edxdu,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Covariate::X4 => "x4",
            Covariate::X5 => "x5",
            Covariate::X6 => "x6",
            Covariate::X7 => "x7",
            Covariate::X8 => "x8",
            Covariate::X9 => "x9",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    I,
    Ii,
    Iii,
    Iv,
    V,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::I, Variant::Ii, Variant::Iii, Variant::Iv, Variant::V];
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::I => "i",
            Variant::Ii => "ii",
            Variant::Iii => "iii",
            Variant::Iv => "iv",
            Variant::V => "v",
        })
    }
}

impl FromStr for Variant {
    type Err = DimaqError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "i" | "1" => Ok(Variant::I),
            "ii" | "2" => Ok(Variant::Ii),
            "iii" | "3" => Ok(Variant::Iii),
            "iv" | "4" => Ok(Variant::Iv),
            "v" | "5" => Ok(Variant::V),
            other => Err(DimaqError::Config(format!("unknown variant {other:?} (expected i, ii, iii, iv or v)"))),
        }
    }
}

/// Which terms a variant carries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    /// Covariates with a fixed slope.
    pub fixed: Vec<Covariate>,
    /// Covariates with random slopes below the global one.
    pub random: Vec<Covariate>,
    /// Covariates interacted with each of X1–X3.
    pub interactions: Vec<Covariate>,
    /// Grid-cell and nested-tree random intercepts.
    pub random_intercept: bool,
    /// The population slope varies by country under an ICAR prior instead of
    /// the nested tree.
    pub icar_population: bool,
}

impl ModelSpec {
    pub fn for_variant(variant: Variant) -> Self {
        use Covariate::*;
        let (fixed, random, interactions) = match variant {
            Variant::I => (vec![X4, X5], vec![], vec![X4, X5]),
            Variant::Ii => (vec![X4, X8], vec![X4, X8], vec![X4]),
            Variant::Iii => (vec![X4, X5, X8], vec![X4, X5, X8], vec![X4, X5]),
            Variant::Iv => (vec![X4, X6, X7, X8, X9], vec![X4, X8], vec![X4]),
            Variant::V => (vec![X4, X5, X6, X7, X8, X9], vec![X4, X5, X8], vec![X4, X5]),
        };
        Self { variant, fixed, random, interactions, random_intercept: variant != Variant::I, icar_population: variant != Variant::I }
    }

    /// Every covariate the model reads.
    pub fn covariates(&self) -> Vec<Covariate> {
        let set: BTreeSet<Covariate> = self.fixed.iter().chain(&self.random).chain(&self.interactions).copied().collect();
        set.into_iter().collect()
    }

    /// Covariates whose random slope uses the nested tree.
    pub fn tree_slopes(&self) -> Vec<Covariate> {
        self.random.iter().copied().filter(|&c| !(self.icar_population && c == Covariate::X8)).collect()
    }

    pub fn icar_covariate(&self) -> Option<Covariate> {
        (self.icar_population && self.random.contains(&Covariate::X8)).then_some(Covariate::X8)
    }

    pub fn fixed_terms(&self) -> Vec<FixedTerm> {
        let mut out = vec![FixedTerm::Intercept, FixedTerm::Indicator(1), FixedTerm::Indicator(2), FixedTerm::Indicator(3)];
        out.extend(self.fixed.iter().map(|&c| FixedTerm::Main(c)));
        for &c in &self.interactions {
            out.extend((1..=3).map(|d| FixedTerm::Interaction(d, c)));
        }
        out
    }
}

/// One fixed-effect column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FixedTerm {
    Intercept,
    /// X1, X2 or X3.
    Indicator(u8),
    Main(Covariate),
    Interaction(u8, Covariate),
}

impl FixedTerm {
    pub fn name(&self) -> String {
        match *self {
            FixedTerm::Intercept => "intercept".into(),
            FixedTerm::Indicator(d) => format!("x{d}"),
            FixedTerm::Main(c) => c.name().into(),
            FixedTerm::Interaction(d, c) => format!("x{d}:{}", c.name()),
        }
    }

    /// Column value for indicators `ind` and standardized covariate lookup `z`.
    pub fn value(&self, ind: [f64; 3], z: impl Fn(Covariate) -> f64) -> f64 {
        match *self {
            FixedTerm::Intercept => 1.0,
            FixedTerm::Indicator(d) => ind[d as usize - 1],
            FixedTerm::Main(c) => z(c),
            FixedTerm::Interaction(d, c) => ind[d as usize - 1] * z(c),
        }
    }
}

/// Centering and scaling of each covariate.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Standardization {
    pub entries: BTreeMap<Covariate, Scaling>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub mean: f64,
    pub sd: f64,
}

impl Standardization {
    /// Sample mean and standard deviation of each covariate over `cells`
    /// (with repetition). A constant covariate keeps unit scale.
    pub fn fit<'a>(covariates: &[Covariate], cells: impl Iterator<Item = &'a GridCellRecord> + Clone) -> Self {
        let entries = covariates
            .iter()
            .map(|&c| {
                let values: Vec<f64> = cells.clone().map(|cell| c.value(cell)).collect();
                let n = values.len() as f64;
                let mean = values.iter().sum::<f64>() / n;
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
                let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
                (c, Scaling { mean, sd })
            })
            .collect();
        Self { entries }
    }

    pub fn z(&self, c: Covariate, raw: f64) -> f64 {
        let s = self.entries[&c];
        (raw - s.mean) / s.sd
    }

    pub fn z_cell(&self, c: Covariate, cell: &GridCellRecord) -> f64 {
        self.z(c, c.value(cell))
    }
}

/// Fixed effects on the raw covariate scale as linear combinations of the
/// standardized ones: slopes divide by the scale, and the intercept and
/// indicator effects absorb the centering.
pub fn raw_fixed_transform(terms: &[FixedTerm], std: &Standardization) -> Vec<(String, Vec<(usize, f64)>)> {
    let pos: HashMap<FixedTerm, usize> = terms.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    terms
        .iter()
        .enumerate()
        .map(|(i, term)| {
            let mut combo = Vec::new();
            match *term {
                FixedTerm::Intercept => {
                    combo.push((i, 1.0));
                    for (j, t) in terms.iter().enumerate() {
                        if let FixedTerm::Main(c) = *t {
                            let s = std.entries[&c];
                            combo.push((j, -s.mean / s.sd));
                        }
                    }
                }
                FixedTerm::Indicator(d) => {
                    combo.push((i, 1.0));
                    for (j, t) in terms.iter().enumerate() {
                        if let FixedTerm::Interaction(e, c) = *t {
                            if e == d {
                                let s = std.entries[&c];
                                combo.push((j, -s.mean / s.sd));
                            }
                        }
                    }
                }
                FixedTerm::Main(c) | FixedTerm::Interaction(_, c) => combo.push((pos[term], 1.0 / std.entries[&c].sd)),
            }
            (term.name(), combo)
        })
        .collect()
}

/// Applies [`raw_fixed_transform`] to coefficient values.
pub fn raw_fixed_effects(terms: &[FixedTerm], std: &Standardization, coefs: &[f64]) -> BTreeMap<String, f64> {
    raw_fixed_transform(terms, std)
        .into_iter()
        .map(|(name, combo)| (name, combo.iter().map(|&(j, w)| w * coefs[j]).sum()))
        .collect()
}

/// Configurable structure and priors shared by all variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelOptions {
    /// Separate region variances per super-region and country variances per
    /// region instead of one variance per level.
    pub per_branch_variances: bool,
    /// Prior overrides keyed by slot family: `noise`, `grid_cell`,
    /// `super_region`, `region`, `country`, `icar_population`.
    pub priors: BTreeMap<String, HyperPrior>,
    /// Prior precision of the fixed effects.
    pub fixed_precision: f64,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self { per_branch_variances: false, priors: BTreeMap::new(), fixed_precision: DEFAULT_FIXED_PRECISION }
    }
}

pub const SLOT_FAMILIES: [&str; 6] = ["noise", "grid_cell", "super_region", "region", "country", "icar_population"];

impl ModelOptions {
    fn prior(&self, family: &str) -> HyperPrior {
        self.priors.get(family).copied().unwrap_or_default()
    }

    fn validate(&self) -> Result<()> {
        if let Some(k) = self.priors.keys().find(|k| !SLOT_FAMILIES.contains(&k.as_str())) {
            return Err(DimaqError::Config(format!("unknown prior slot {k:?}; expected one of {SLOT_FAMILIES:?}")));
        }
        if !(self.fixed_precision > 0.0 && self.fixed_precision.is_finite()) {
            return Err(DimaqError::Config("fixed_precision must be positive".into()));
        }
        Ok(())
    }
}

/// Which nested-tree block a composed coefficient refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeEffect {
    Intercept,
    Slope(Covariate),
}

/// Block index, θ offset and (for single-slot blocks) hyperparameter slot.
#[derive(Debug, Clone, Copy)]
struct BlockRef {
    block: usize,
    offset: usize,
    slot: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    grid_cell: Option<BlockRef>,
    intercept: Option<BlockRef>,
    slopes: Vec<(Covariate, BlockRef)>,
    icar: Option<BlockRef>,
    /// Slots of the tree levels: one super-region slot, region slots and
    /// country slots (one each when shared).
    tree_slots: Option<TreeSlots>,
}

/// A row of the predictor together with the variance it leaves out: each
/// `(slot, c)` adds `c / τ_slot` at every grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub row: SparseRow,
    pub extra: Vec<(usize, f64)>,
    /// The country was unknown and only fixed effects were used.
    pub fallback: bool,
}

impl PredictionRow {
    pub fn extra_variance(&self, psi: &[f64]) -> f64 {
        self.extra.iter().map(|&(slot, c)| c * (-psi[slot]).exp()).sum()
    }
}

/// A variant built on a monitor set, with what is needed to form
/// prediction rows for any cell.
#[derive(Debug, Clone)]
pub struct DimaqModel {
    pub spec: ModelSpec,
    pub options: ModelOptions,
    pub lgm: LatentGaussianModel,
    pub standardization: Standardization,
    pub terms: Vec<FixedTerm>,
    /// Grid-cell effect level of each cell holding a monitor.
    pub cell_levels: BTreeMap<u64, usize>,
    country_ids: Vec<String>,
    country_lookup: HashMap<String, usize>,
    tree: gmrf::TreeIndex,
    layout: Layout,
}

/// Builds `spec` on every monitor of `data`. Monitors must be PM2.5 (run
/// the PM10 conversion first).
pub fn build_model(spec: &ModelSpec, data: &Dataset, options: &ModelOptions) -> Result<DimaqModel> {
    options.validate()?;
    let monitors = &data.monitors;
    if monitors.is_empty() {
        return Err(DimaqError::InsufficientData("no monitors".into()));
    }
    let pm10: Vec<String> =
        monitors.iter().filter(|m| m.pollutant == Pollutant::Pm10).map(|m| m.monitor_id.clone()).collect();
    if !pm10.is_empty() {
        return Err(DimaqError::Unresolved { kind: "PM10 records (convert them first)".into(), ids: pm10 });
    }
    let hierarchy = &data.hierarchy;
    let cells: Vec<&GridCellRecord> = monitors
        .iter()
        .map(|m| data.cell(m.cell_id).ok_or_else(|| DimaqError::Unresolved { kind: "cells".into(), ids: vec![m.cell_id.to_string()] }))
        .collect::<Result<_>>()?;
    let country: Vec<usize> = monitors
        .iter()
        .map(|m| {
            hierarchy.country_index(&m.country_id).ok_or_else(|| DimaqError::Unresolved {
                kind: "countries".into(),
                ids: vec![m.country_id.clone()],
            })
        })
        .collect::<Result<_>>()?;

    let standardization = Standardization::fit(&spec.covariates(), cells.iter().copied());
    let terms = spec.fixed_terms();
    let y: Vec<f64> = monitors.iter().map(|m| m.value.ln()).collect();
    let mut b = ModelBuilder::new(y);
    b.set_fixed_precision(options.fixed_precision);
    b.add_noise_slot(options.prior("noise"));
    for term in &terms {
        let column = monitors
            .iter()
            .zip(&cells)
            .map(|(m, cell)| term.value(m.indicators(), |c| standardization.z_cell(c, cell)))
            .collect();
        b.add_fixed(&term.name(), column);
    }
    let n_fixed = terms.len();

    let tree = hierarchy.tree_index();
    let tree_slopes = spec.tree_slopes();
    let tree_slots = (spec.random_intercept || !tree_slopes.is_empty()).then(|| {
        let sr = b.add_slot("super_region", options.prior("super_region"));
        if options.per_branch_variances {
            let region = hierarchy
                .super_regions()
                .iter()
                .map(|s| b.add_slot(&format!("region[{}]", s.id), options.prior("region")))
                .collect();
            let leaf = hierarchy
                .regions()
                .iter()
                .map(|r| b.add_slot(&format!("country[{}]", r.id), options.prior("country")))
                .collect();
            TreeSlots { super_region: sr, region, leaf }
        } else {
            let r = b.add_slot("region", options.prior("region"));
            let c = b.add_slot("country", options.prior("country"));
            TreeSlots::shared(sr, r, c)
        }
    });

    let mut theta_offset = n_fixed;
    let mut block_count = 0;
    let mut layout = Layout { grid_cell: None, intercept: None, slopes: Vec::new(), icar: None, tree_slots: tree_slots.clone() };
    let mut cell_levels = BTreeMap::new();
    if spec.random_intercept {
        let slot = b.add_slot("grid_cell", options.prior("grid_cell"));
        let ids: BTreeSet<u64> = monitors.iter().map(|m| m.cell_id).collect();
        cell_levels = ids.into_iter().enumerate().map(|(i, id)| (id, i)).collect();
        let incidence = monitors.iter().map(|m| cell_levels[&m.cell_id]).collect();
        b.add_block(EffectBlock::grid_cell("grid_cell", cell_levels.len(), incidence, slot));
        layout.grid_cell = Some(BlockRef { block: block_count, offset: theta_offset, slot });
        block_count += 1;
        theta_offset += cell_levels.len();

        b.add_block(EffectBlock::nested_tree(
            "intercept",
            tree.clone(),
            country.clone(),
            None,
            tree_slots.clone().expect("tree slots exist with a random intercept"),
        ));
        layout.intercept = Some(BlockRef { block: block_count, offset: theta_offset, slot: 0 });
        block_count += 1;
        theta_offset += tree.stacked_len();
    }
    for &c in &tree_slopes {
        let mult = cells.iter().map(|cell| standardization.z_cell(c, cell)).collect();
        b.add_block(EffectBlock::nested_tree(
            &format!("slope_{}", c.name()),
            tree.clone(),
            country.clone(),
            Some(mult),
            tree_slots.clone().expect("tree slots exist with tree slopes"),
        ));
        layout.slopes.push((c, BlockRef { block: block_count, offset: theta_offset, slot: 0 }));
        block_count += 1;
        theta_offset += tree.stacked_len();
    }
    if let Some(c) = spec.icar_covariate() {
        let slot = b.add_slot("icar_population", options.prior("icar_population"));
        let mult = cells.iter().map(|cell| standardization.z_cell(c, cell)).collect();
        b.add_block(EffectBlock::icar("icar_population", hierarchy.adjacency().clone(), country.clone(), Some(mult), slot));
        layout.icar = Some(BlockRef { block: block_count, offset: theta_offset, slot });
        theta_offset += hierarchy.countries().len();
    }
    debug_assert_eq!(theta_offset, b.theta_dim());

    // Register every support a prediction row can have so that its joint
    // posterior covariance lies on the factor pattern.
    let country_lookup: HashMap<String, usize> =
        hierarchy.countries().iter().enumerate().map(|(i, c)| (c.id.clone(), i)).collect();
    b.add_clique((0..n_fixed).collect());
    let country_cliques: Vec<Vec<usize>> =
        (0..hierarchy.countries().len()).map(|c| layout.country_support(n_fixed, &tree, c)).collect();
    for clique in &country_cliques {
        b.add_clique(clique.clone());
    }
    if let Some(g) = layout.grid_cell {
        let mut pairs: BTreeSet<(u64, usize)> = monitors.iter().zip(&country).map(|(m, &c)| (m.cell_id, c)).collect();
        for &id in cell_levels.keys() {
            if let Some(&c) = data.cell(id).and_then(|cell| country_lookup.get(&cell.country_id)) {
                pairs.insert((id, c));
            }
        }
        for (id, c) in pairs {
            let mut clique = country_cliques[c].clone();
            clique.push(g.offset + cell_levels[&id]);
            b.add_clique(clique);
        }
    }
    Ok(DimaqModel {
        spec: spec.clone(),
        options: options.clone(),
        lgm: b.build()?,
        standardization,
        terms,
        cell_levels,
        country_ids: hierarchy.countries().iter().map(|c| c.id.clone()).collect(),
        country_lookup,
        tree,
        layout,
    })
}

impl Layout {
    /// θ indices a country's prediction rows can touch, grid cell aside.
    fn country_support(&self, n_fixed: usize, tree: &gmrf::TreeIndex, country: usize) -> Vec<usize> {
        let mut out: Vec<usize> = (0..n_fixed).collect();
        for r in self.intercept.iter().chain(self.slopes.iter().map(|s| &s.1)) {
            out.extend(tree.path(country).into_iter().map(|p| r.offset + p));
        }
        if let Some(r) = self.icar {
            out.push(r.offset + country);
        }
        out
    }
}

impl DimaqModel {
    pub fn n_fixed(&self) -> usize {
        self.terms.len()
    }

    pub fn country_ids(&self) -> &[String] {
        &self.country_ids
    }

    pub fn country_index(&self, id: &str) -> Option<usize> {
        self.country_lookup.get(id).copied()
    }

    /// Index of a named hyperparameter slot.
    pub fn slot(&self, name: &str) -> Option<usize> {
        self.lgm.slots().iter().position(|s| s.name == name)
    }

    fn tree_block(&self, effect: TreeEffect) -> Option<BlockRef> {
        match effect {
            TreeEffect::Intercept => self.layout.intercept,
            TreeEffect::Slope(c) => self.layout.slopes.iter().find(|s| s.0 == c).map(|s| s.1),
        }
    }

    /// θ index of a country's own deviation in a nested-tree block.
    pub fn country_deviation_index(&self, effect: TreeEffect, country: usize) -> Option<usize> {
        let b = self.tree_block(effect)?;
        Some(b.offset + *self.tree.path(country).last().expect("paths end at the leaf"))
    }

    /// The composed coefficient of a country (global term plus its
    /// super-region, region and country deviations), and the same
    /// composition stopping at the region level.
    pub fn composed_rows(&self, effect: TreeEffect, country: usize) -> Option<(SparseRow, SparseRow)> {
        let b = self.tree_block(effect)?;
        let global = match effect {
            TreeEffect::Intercept => FixedTerm::Intercept,
            TreeEffect::Slope(c) => FixedTerm::Main(c),
        };
        let g = self.terms.iter().position(|t| *t == global)?;
        let off = b.offset;
        let path = self.tree.path(country);
        let full = SparseRow::new(std::iter::once((g, 1.0)).chain(path.iter().map(|&p| (off + p, 1.0))));
        let region =
            SparseRow::new(std::iter::once((g, 1.0)).chain(path[..path.len() - 1].iter().map(|&p| (off + p, 1.0))));
        Some((full, region))
    }

    /// Raw-scale fixed effects as rows over θ.
    pub fn raw_fixed_rows(&self) -> Vec<(String, SparseRow)> {
        raw_fixed_transform(&self.terms, &self.standardization)
            .into_iter()
            .map(|(name, combo)| (name, SparseRow::new(combo)))
            .collect()
    }

    /// Predictor row of a cell for a monitor with indicators `ind` in
    /// country `country_id`. Cells without a monitor in the fitted data carry
    /// the grid-cell variance as extra variance; an unknown country falls
    /// back to fixed effects plus the prior variance of every level.
    pub fn row_for(&self, country_id: &str, cell: &GridCellRecord, ind: [f64; 3]) -> inla::Result<PredictionRow> {
        let z = |c: Covariate| self.standardization.z_cell(c, cell);
        let fixed: Vec<f64> = self.terms.iter().map(|t| t.value(ind, z)).collect();
        let mut effects: Vec<Option<(usize, f64)>> = vec![None; self.lgm.blocks().len()];
        let mut extra = Vec::new();
        if let Some(g) = self.layout.grid_cell {
            match self.cell_levels.get(&cell.cell_id) {
                Some(&level) => effects[g.block] = Some((level, 1.0)),
                None => extra.push((g.slot, 1.0)),
            }
        }
        let country = self.country_lookup.get(country_id).copied();
        let tree_extra = |extra: &mut Vec<(usize, f64)>, mult2: f64| {
            let slots = self.layout.tree_slots.as_ref().expect("tree blocks have slots");
            extra.push((slots.super_region, mult2));
            for level in [&slots.region, &slots.leaf] {
                let w = mult2 / level.len() as f64;
                extra.extend(level.iter().map(|&s| (s, w)));
            }
        };
        if let Some(b) = self.layout.intercept {
            match country {
                Some(c) => effects[b.block] = Some((c, 1.0)),
                None => tree_extra(&mut extra, 1.0),
            }
        }
        for &(cov, b) in &self.layout.slopes {
            match country {
                Some(c) => effects[b.block] = Some((c, z(cov))),
                None => tree_extra(&mut extra, z(cov).powi(2)),
            }
        }
        if let Some(b) = self.layout.icar {
            let m = z(Covariate::X8);
            match country {
                Some(c) => effects[b.block] = Some((c, m)),
                None => extra.push((b.slot, m * m)),
            }
        }
        Ok(PredictionRow { row: self.lgm.design_row_from(&fixed, &effects)?, extra, fallback: country.is_none() })
    }

    /// Row of a monitor at its own cell, with its own indicators.
    pub fn monitor_row(&self, monitor: &MonitorRecord, cell: &GridCellRecord) -> inla::Result<PredictionRow> {
        self.row_for(&monitor.country_id, cell, monitor.indicators())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_table() {
        let ii = ModelSpec::for_variant(Variant::Ii);
        assert_eq!(ii.random, vec![Covariate::X4, Covariate::X8]);
        assert_eq!(ii.fixed, vec![Covariate::X4, Covariate::X8]);
        assert_eq!(ii.interactions, vec![Covariate::X4]);
        assert!(ii.random_intercept && ii.icar_population);
        let iv = ModelSpec::for_variant(Variant::Iv);
        assert_eq!(iv.random, ii.random);
        for c in [Covariate::X6, Covariate::X7, Covariate::X9] {
            assert!(iv.fixed.contains(&c));
        }
        let i = ModelSpec::for_variant(Variant::I);
        assert!(i.random.is_empty() && !i.random_intercept);
        let names: Vec<String> = ii.fixed_terms().iter().map(FixedTerm::name).collect();
        assert_eq!(names, ["intercept", "x1", "x2", "x3", "x4", "x8", "x1:x4", "x2:x4", "x3:x4"]);
    }

    #[test]
    fn variant_parse_roundtrip() {
        for v in Variant::ALL {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert!("vi".parse::<Variant>().is_err());
    }

    #[test]
    fn raw_transform_inverts_standardization() {
        // η = b0 + b1 x1 + b4 z4 + b14 x1 z4 with z4 = (x4 − 3)/2 evaluated
        // on the raw scale must agree for arbitrary inputs.
        let spec = ModelSpec { variant: Variant::I, fixed: vec![Covariate::X4], random: vec![], interactions: vec![Covariate::X4], random_intercept: false, icar_population: false };
        let terms = spec.fixed_terms();
        let std = Standardization { entries: BTreeMap::from([(Covariate::X4, Scaling { mean: 3.0, sd: 2.0 })]) };
        let coefs = [0.5, 0.2, -0.1, 0.3, 1.5, 0.7, 0.0, -0.4];
        let raw = raw_fixed_effects(&terms, &std, &coefs);
        for (x1, x3, x4) in [(0.0, 0.0, 1.0), (1.0, 0.0, 7.0), (1.0, 1.0, -2.0)] {
            let ind = [x1, 0.0, x3];
            let z4 = (x4 - 3.0) / 2.0;
            let standardized: f64 = terms.iter().zip(&coefs).map(|(t, b)| b * t.value(ind, |_| z4)).sum();
            let on_raw = raw["intercept"] + raw["x1"] * x1 + raw["x3"] * x3 + raw["x4"] * x4
                + raw["x1:x4"] * x1 * x4 + raw["x3:x4"] * x3 * x4;
            assert!((standardized - on_raw).abs() < 1e-12);
        }
    }
}
