//! Posterior predictive summaries for grid cells and population exposure.
//!
//! Every cell is predicted as a new monitor with reference indicators
//! located in the cell's country. The posterior is a mixture over the
//! hyperparameter grid of Gaussians on the log scale; summaries are reported
//! on the concentration scale. Cells are processed in chunks whose results
//! do not depend on the chunk size.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use inla::{CombinationSet, MixtureMarginal, MixtureSummary, Scale};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::GridCellRecord;
use crate::error::{DimaqError, Result};
use crate::fitting::FittedVariant;
use crate::model::PredictionRow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictionOptions {
    /// Concentrations (µg/m³) for which exceedance probabilities are
    /// reported.
    pub thresholds: Vec<f64>,
    /// Add the measurement-noise variance, giving the predictive
    /// distribution of a new monitor rather than of the underlying level.
    pub include_noise: bool,
    /// Network indicators `[X1, X2, X3]` of the notional monitor.
    pub reference_indicators: [f64; 3],
    /// Cells per chunk; `0` processes every cell in one chunk.
    pub chunk_size: usize,
}

impl Default for PredictionOptions {
    fn default() -> Self {
        Self { thresholds: vec![10.0, 35.0, 75.0], include_noise: false, reference_indicators: [0.0, 1.0, 0.0], chunk_size: 256 }
    }
}

impl PredictionOptions {
    fn validate(&self) -> Result<()> {
        if let Some(t) = self.thresholds.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(DimaqError::Config(format!("exceedance thresholds must be positive, got {t}")));
        }
        if self.reference_indicators.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(DimaqError::Config("reference indicators must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CellPosterior {
    pub cell_id: u64,
    pub summary: MixtureSummary,
    /// The cell's country was absent from the fit; only fixed effects and
    /// prior variances were used.
    pub fallback: bool,
    pub marginal: MixtureMarginal,
}

/// Prepared state for predicting a fixed set of cells. All posterior work
/// that depends on the full cell set happens here, once.
pub struct Predictor {
    options: PredictionOptions,
    noise_slot: usize,
    rows: Vec<(u64, PredictionRow)>,
    set: CombinationSet,
}

impl Predictor {
    pub fn new(fitted: &FittedVariant, cells: &[GridCellRecord], options: &PredictionOptions) -> Result<Self> {
        options.validate()?;
        let mut sorted: Vec<&GridCellRecord> = cells.iter().collect();
        sorted.sort_by_key(|c| c.cell_id);
        if let Some(w) = sorted.windows(2).find(|w| w[0].cell_id == w[1].cell_id) {
            return Err(DimaqError::Config(format!("cell {} is listed twice", w[0].cell_id)));
        }
        let rows: Vec<(u64, PredictionRow)> = sorted
            .iter()
            .map(|c| Ok((c.cell_id, fitted.model.row_for(&c.country_id, c, options.reference_indicators)?)))
            .collect::<Result<_>>()?;
        let cliques: BTreeSet<Vec<usize>> = rows.iter().map(|(_, r)| r.row.indices().to_vec()).collect();
        let cliques: Vec<Vec<usize>> = cliques.into_iter().collect();
        let set = fitted.fit.combination_set(&cliques)?;
        let fallback = rows.iter().filter(|(_, r)| r.fallback).count();
        if fallback > 0 {
            log::warn!("{fallback} cells belong to countries absent from the fit and use the fixed-effects fallback");
        }
        Ok(Self { options: options.clone(), noise_slot: fitted.model.lgm.noise_slot(), rows, set })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn predict_row(&self, cell_id: u64, row: &PredictionRow) -> Result<CellPosterior> {
        let compiled = self.set.compile(&row.row)?;
        let noise = self.options.include_noise;
        let slot = self.noise_slot;
        let extra = |psi: &[f64]| row.extra_variance(psi) + if noise { (-psi[slot]).exp() } else { 0.0 };
        let marginal = self.set.marginal(&compiled, 0.0, &extra, Scale::Log)?;
        let summary = marginal.summaries(&self.options.thresholds)?;
        Ok(CellPosterior { cell_id, summary, fallback: row.fallback, marginal })
    }

    /// Predicts cells in ascending id order, handing each chunk to `sink`.
    pub fn run(&self, mut sink: impl FnMut(Vec<CellPosterior>) -> Result<()>) -> Result<()> {
        let size = if self.options.chunk_size == 0 { self.rows.len().max(1) } else { self.options.chunk_size };
        for chunk in self.rows.chunks(size) {
            let out: Vec<CellPosterior> =
                chunk.par_iter().map(|(id, row)| self.predict_row(*id, row)).collect::<Result<_>>()?;
            sink(out)?;
        }
        Ok(())
    }
}

/// Predicts every cell and returns the posteriors sorted by cell id.
pub fn predict_cells(
    fitted: &FittedVariant,
    cells: &[GridCellRecord],
    options: &PredictionOptions,
) -> Result<Vec<CellPosterior>> {
    let predictor = Predictor::new(fitted, cells, options)?;
    let mut out = Vec::with_capacity(predictor.len());
    predictor.run(|chunk| {
        out.extend(chunk);
        Ok(())
    })?;
    Ok(out)
}

/// Probability of exceeding each threshold, per cell.
pub fn exceedance_product(posteriors: &[CellPosterior], thresholds: &[f64]) -> Result<Vec<(u64, Vec<f64>)>> {
    posteriors
        .iter()
        .map(|p| Ok((p.cell_id, thresholds.iter().map(|&t| p.marginal.exceed_prob(t)).collect::<inla::Result<Vec<_>>>()?)))
        .collect()
}

/// Writes the CSV header and rows of the cell-level prediction product.
pub struct PredictionWriter<W: Write> {
    out: csv::Writer<W>,
}

impl<W: Write> PredictionWriter<W> {
    pub fn new(inner: W, thresholds: &[f64]) -> Result<Self> {
        let mut out = csv::Writer::from_writer(inner);
        let mut header: Vec<String> =
            ["cell_id", "median", "mean", "sd", "ci95_halfwidth"].iter().map(|s| s.to_string()).collect();
        header.extend(thresholds.iter().map(|t| format!("p_exceed_{t}")));
        out.write_record(&header).map_err(csv_error)?;
        Ok(Self { out })
    }

    pub fn write(&mut self, posteriors: &[CellPosterior]) -> Result<()> {
        for p in posteriors {
            let s = &p.summary;
            let mut rec = vec![p.cell_id.to_string(), s.median.to_string(), s.mean.to_string(), s.sd.to_string(), s.ci95_halfwidth.to_string()];
            rec.extend(s.exceed.iter().map(|e| e.to_string()));
            self.out.write_record(&rec).map_err(csv_error)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| DimaqError::io(Path::new("<predictions>"), e))
    }
}

fn csv_error(e: csv::Error) -> DimaqError {
    DimaqError::io(Path::new("<predictions>"), std::io::Error::other(e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureBin {
    pub lower: f64,
    pub upper: f64,
    pub population: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureSummary {
    pub guideline: f64,
    /// Share of the population living in cells whose posterior median
    /// exceeds the guideline.
    pub fraction_above: f64,
    pub total_population: f64,
    pub bin_width: f64,
    /// Population by posterior-median concentration bin.
    pub histogram: Vec<ExposureBin>,
    /// Cells predicted with the fixed-effects fallback.
    pub fallback_cells: Vec<u64>,
}

/// Population exposure from `(cell_id, median, fallback)` triples.
pub fn population_exposure(
    medians: &[(u64, f64, bool)],
    cells: &[GridCellRecord],
    guideline: f64,
    bin_width: f64,
) -> Result<ExposureSummary> {
    if !(bin_width > 0.0) {
        return Err(DimaqError::Config(format!("histogram bin width must be positive, got {bin_width}")));
    }
    let pop: std::collections::HashMap<u64, f64> = cells.iter().map(|c| (c.cell_id, c.x8_pop)).collect();
    let mut total = 0.0;
    let mut above = 0.0;
    let mut bins: Vec<f64> = Vec::new();
    let mut fallback_cells = Vec::new();
    for &(id, median, fallback) in medians {
        let p = *pop.get(&id).ok_or_else(|| DimaqError::Unresolved { kind: "cells".into(), ids: vec![id.to_string()] })?;
        total += p;
        if median > guideline {
            above += p;
        }
        let b = (median / bin_width).floor().max(0.0) as usize;
        if bins.len() <= b {
            bins.resize(b + 1, 0.0);
        }
        bins[b] += p;
        if fallback {
            fallback_cells.push(id);
        }
    }
    if !(total > 0.0) {
        return Err(DimaqError::InsufficientData("total population of the predicted cells is zero".into()));
    }
    let histogram = bins
        .into_iter()
        .enumerate()
        .map(|(i, population)| ExposureBin { lower: i as f64 * bin_width, upper: (i + 1) as f64 * bin_width, population })
        .collect();
    Ok(ExposureSummary { guideline, fraction_above: above / total, total_population: total, bin_width, histogram, fallback_cells })
}
