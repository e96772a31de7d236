//! Full nested-Laplace fit: mode search over free hyperparameters, lattice
//! exploration, and per-point Gaussian conditionals combined into mixture
//! marginals.

use std::collections::HashMap;
use std::sync::Arc;

use gmrf::SymbolicCholesky;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditional::{conditional_posterior, log_hyper_posterior, ConditionalGaussian};
use crate::error::{InlaError, Result};
use crate::grid::{explore_grid, marginal_hyperparameter, GridOptions, HyperGrid};
use crate::mixture::{MixtureComponent, MixtureMarginal, Scale};
use crate::model::{gaussian_loglik, LatentGaussianModel, SparseRow};
use crate::optimize::{find_mode, LogDensity, ModeOptions, ModeResult};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct InlaConfig {
    pub mode: ModeOptions,
    pub grid: GridOptions,
}

/// `log p̃(ψ | y)` as a function of the free slots only.
pub struct HyperObjective<'a> {
    model: &'a LatentGaussianModel,
    free: Vec<usize>,
    base: Vec<f64>,
}

impl<'a> HyperObjective<'a> {
    /// `base` supplies the values of fixed slots (pinned values override it).
    pub fn new(model: &'a LatentGaussianModel, base: &[f64]) -> Result<Self> {
        model.check_psi(base)?;
        let mut base = base.to_vec();
        model.pin_fixed_slots(&mut base);
        Ok(Self { model, free: model.free_slots(), base })
    }

    pub fn full(&self, x: &[f64]) -> Vec<f64> {
        let mut psi = self.base.clone();
        for (&k, &v) in self.free.iter().zip(x) {
            psi[k] = v;
        }
        psi
    }

    pub fn free(&self, psi: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&k| psi[k]).collect()
    }
}

impl LogDensity for HyperObjective<'_> {
    fn dim(&self) -> usize {
        self.free.len()
    }

    fn log_density(&self, x: &[f64]) -> Result<f64> {
        log_hyper_posterior(self.model, &self.full(x))
    }
}

/// Default starting point: noise precision from the response variance, unit
/// precision elsewhere, fixed slots at their pinned values.
pub fn default_start(model: &LatentGaussianModel) -> Vec<f64> {
    let y = model.y();
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let mut psi = vec![0.0; model.n_slots()];
    psi[model.noise_slot()] = -(var.max(1e-8) / 2.0).ln();
    model.pin_fixed_slots(&mut psi);
    psi
}

/// Conditional summaries at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointPosterior {
    pub psi: Vec<f64>,
    pub log_density: f64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// `Σ_s (y_s − offset_s − a_sᵀ θ̂)²`.
    pub residual_ss: f64,
    /// `Σ_s Var(a_sᵀ θ | ψ, y)`.
    pub predictor_variance_sum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DicSummary {
    pub dic: f64,
    pub mean_deviance: f64,
    pub deviance_at_mean: f64,
    pub effective_parameters: f64,
}

#[derive(Debug, Clone)]
pub struct InlaFit {
    model: LatentGaussianModel,
    config: InlaConfig,
    mode: ModeResult,
    mode_psi: Vec<f64>,
    grid: HyperGrid,
    points: Vec<PointPosterior>,
    weights: Vec<f64>,
}

/// Fits `model`: BFGS mode search over the free hyperparameters, lattice
/// exploration, then one exact Gaussian conditional per lattice point.
pub fn fit(model: &LatentGaussianModel, config: &InlaConfig, start: Option<&[f64]>) -> Result<InlaFit> {
    let start = start.map(<[f64]>::to_vec).unwrap_or_else(|| default_start(model));
    let objective = HyperObjective::new(model, &start)?;
    let mode = find_mode(&objective, &objective.free(&objective.base), &config.mode)?;
    log::debug!("hyperparameter mode after {} iterations: {:?}", mode.iterations, mode.x);
    let grid = explore_grid(&objective, &mode.x, &mode.hessian, &config.grid)?;
    log::debug!("hyperparameter grid with {} points", grid.points.len());
    InlaFit::from_grid(model, config, mode, grid, &start)
}

impl InlaFit {
    /// Evaluates the latent conditionals on an existing grid (for example one
    /// read back from a fit artifact). `base` supplies fixed-slot values.
    pub fn from_grid(
        model: &LatentGaussianModel,
        config: &InlaConfig,
        mode: ModeResult,
        grid: HyperGrid,
        base: &[f64],
    ) -> Result<Self> {
        let objective = HyperObjective::new(model, base)?;
        let mode_psi = objective.full(&grid.mode);
        let points: Vec<PointPosterior> = grid
            .points
            .par_iter()
            .map(|p| evaluate_point(model, objective.full(&p.x), p.log_density))
            .collect::<Result<_>>()?;
        let weights = grid.normalized_weights();
        Ok(Self { model: model.clone(), config: *config, mode, mode_psi, grid, points, weights })
    }

    pub fn model(&self) -> &LatentGaussianModel {
        &self.model
    }

    pub fn config(&self) -> &InlaConfig {
        &self.config
    }

    pub fn mode(&self) -> &ModeResult {
        &self.mode
    }

    /// Full hyperparameter vector at the lattice origin.
    pub fn mode_psi(&self) -> &[f64] {
        &self.mode_psi
    }

    pub fn grid(&self) -> &HyperGrid {
        &self.grid
    }

    pub fn points(&self) -> &[PointPosterior] {
        &self.points
    }

    /// Normalized posterior masses of the grid points.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Mixture marginal of latent coordinate `j`.
    pub fn marginal_latent(&self, j: usize) -> Result<MixtureMarginal> {
        if j >= self.model.theta_dim() {
            return Err(InlaError::DimensionMismatch { expected: self.model.theta_dim(), found: j });
        }
        let comps = self
            .points
            .iter()
            .zip(&self.weights)
            .map(|(p, &w)| MixtureComponent { mean: p.mean[j], sd: p.variance[j].max(0.0).sqrt(), weight: w })
            .collect();
        MixtureMarginal::new(comps, Scale::Natural)
    }

    /// Posterior mean of θ.
    pub fn posterior_mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.model.theta_dim()];
        for (p, &w) in self.points.iter().zip(&self.weights) {
            for (o, m) in out.iter_mut().zip(&p.mean) {
                *o += w * m;
            }
        }
        out
    }

    /// Discrete posterior of hyperparameter slot `k` as `(value, mass)`.
    pub fn marginal_hyperparameter(&self, k: usize) -> Result<Vec<(f64, f64)>> {
        if k >= self.model.n_slots() {
            return Err(InlaError::SlotMismatch { expected: self.model.n_slots(), found: k });
        }
        match self.model.free_slots().iter().position(|&s| s == k) {
            Some(idx) => marginal_hyperparameter(&self.grid, idx),
            None => Ok(vec![(self.mode_psi[k], 1.0)]),
        }
    }

    /// Deviance information criterion with the noise precision plugged in at
    /// the grid mode.
    pub fn dic(&self) -> Result<DicSummary> {
        let tau = self.mode_psi[self.model.noise_slot()].exp();
        let n = self.model.n_obs() as f64;
        let norm = n * (2.0 * std::f64::consts::PI / tau).ln();
        let mean_deviance: f64 = self
            .points
            .iter()
            .zip(&self.weights)
            .map(|(p, &w)| w * (norm + tau * (p.residual_ss + p.predictor_variance_sum)))
            .sum();
        let eta = self.model.linear_predictor(&self.posterior_mean())?;
        let deviance_at_mean = -2.0 * gaussian_loglik(self.model.y(), &eta, tau)?;
        let effective_parameters = mean_deviance - deviance_at_mean;
        Ok(DicSummary { dic: mean_deviance + effective_parameters, mean_deviance, deviance_at_mean, effective_parameters })
    }

    /// Precomputes, for every grid point, the posterior covariances needed by
    /// linear combinations whose supports are among `cliques`. Every clique
    /// must have been registered with the model builder (or lie within a
    /// design row) so that it is on the factor pattern.
    pub fn combination_set(&self, cliques: &[Vec<usize>]) -> Result<CombinationSet> {
        let st = &self.model.structure;
        let symbolic = st.post_symbolic.as_ref().expect("built");
        let mut positions: Vec<usize> = Vec::new();
        let mut thetas: Vec<usize> = Vec::new();
        for clique in cliques {
            for (a, &i) in clique.iter().enumerate() {
                thetas.push(i);
                for &j in &clique[a..] {
                    let p = symbolic.factor_position(i, j).ok_or_else(|| {
                        InlaError::InvalidArgument(format!("pair ({i}, {j}) was not registered in the model pattern"))
                    })?;
                    positions.push(p);
                }
            }
        }
        positions.sort_unstable();
        positions.dedup();
        thetas.sort_unstable();
        thetas.dedup();
        let position_index: HashMap<usize, usize> = positions.iter().enumerate().map(|(k, &p)| (p, k)).collect();
        let theta_index: HashMap<usize, usize> = thetas.iter().enumerate().map(|(k, &t)| (t, k)).collect();

        let states: Vec<PointState> = self
            .points
            .par_iter()
            .map(|p| {
                let cond = conditional_posterior(&self.model, &p.psi)?;
                let selinv = cond.selected_inverse();
                let cov = positions.iter().map(|&q| selinv.at(q)).collect();
                let (w, s_inv) = match cond.correction() {
                    Some(c) => (
                        c.w.iter().map(|wc| thetas.iter().map(|&t| wc[t]).collect()).collect(),
                        c.s_inv.clone(),
                    ),
                    None => (Vec::new(), DMatrix::zeros(0, 0)),
                };
                Ok(PointState { cov, w, s_inv })
            })
            .collect::<Result<_>>()?;
        Ok(CombinationSet {
            symbolic_positions: position_index,
            theta_index,
            states,
            means: self.points.iter().map(|p| p.mean.clone()).collect(),
            psis: self.points.iter().map(|p| p.psi.clone()).collect(),
            weights: self.weights.clone(),
            symbolic: Arc::clone(symbolic),
        })
    }
}

fn evaluate_point(model: &LatentGaussianModel, psi: Vec<f64>, log_density: f64) -> Result<PointPosterior> {
    let cond = conditional_posterior(model, &psi)?;
    let selinv = cond.selected_inverse();
    let variance = cond.variances_from(&selinv);
    let st = &model.structure;
    let pattern = st.post_pattern.as_ref().expect("built");

    // Σ_s a_sᵀ Σ a_s = Σ_ij (AᵀA)_ij Σ_ij over the stored upper triangle.
    let mut predictor_variance_sum = 0.0;
    for ((r, c), &v) in pattern.coordinates().zip(&st.ata) {
        if v != 0.0 {
            let s = selinv.get(r, c).expect("pattern entries lie on the factor");
            predictor_variance_sum += if r == c { v * s } else { 2.0 * v * s };
        }
    }
    if let Some(corr) = cond.correction() {
        for row in &st.rows {
            let u: Vec<f64> = corr.w.iter().map(|w| row.dot(w)).collect();
            predictor_variance_sum -= corr.reduction(&u);
        }
    }
    let mean = cond.mean().to_vec();
    let residual_ss = st
        .rows
        .iter()
        .enumerate()
        .map(|(s, row)| (model.y()[s] - model.offset()[s] - row.dot(&mean)).powi(2))
        .sum();
    Ok(PointPosterior { psi, log_density, mean, variance, residual_ss, predictor_variance_sum })
}

struct PointState {
    cov: Vec<f64>,
    w: Vec<Vec<f64>>,
    s_inv: DMatrix<f64>,
}

/// Per-grid-point posterior state for evaluating linear combinations
/// `aᵀθ` without refactorizing. Results for a row do not depend on which
/// other rows are evaluated or in what order.
pub struct CombinationSet {
    symbolic_positions: HashMap<usize, usize>,
    theta_index: HashMap<usize, usize>,
    states: Vec<PointState>,
    means: Vec<Vec<f64>>,
    psis: Vec<Vec<f64>>,
    weights: Vec<f64>,
    symbolic: Arc<SymbolicCholesky>,
}

/// A linear combination resolved against a [`CombinationSet`].
pub struct CompiledRow {
    row: SparseRow,
    cov_terms: Vec<(usize, f64)>,
    w_terms: Vec<(usize, f64)>,
}

impl CombinationSet {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn psis(&self) -> &[Vec<f64>] {
        &self.psis
    }

    pub fn compile(&self, row: &SparseRow) -> Result<CompiledRow> {
        let idx = row.indices();
        let val = row.values();
        let mut cov_terms = Vec::with_capacity(idx.len() * (idx.len() + 1) / 2);
        for a in 0..idx.len() {
            for b in a..idx.len() {
                let pos = self.symbolic.factor_position(idx[a], idx[b]);
                let g = pos.and_then(|p| self.symbolic_positions.get(&p)).ok_or_else(|| {
                    InlaError::InvalidArgument(format!("pair ({}, {}) is not in the combination set", idx[a], idx[b]))
                })?;
                let coef = if a == b { val[a] * val[a] } else { 2.0 * val[a] * val[b] };
                cov_terms.push((*g, coef));
            }
        }
        let w_terms = row
            .iter()
            .map(|(i, v)| {
                self.theta_index
                    .get(&i)
                    .map(|&k| (k, v))
                    .ok_or_else(|| InlaError::InvalidArgument(format!("index {i} is not in the combination set")))
            })
            .collect::<Result<_>>()?;
        Ok(CompiledRow { row: row.clone(), cov_terms, w_terms })
    }

    /// Mean and variance of `aᵀθ` at every grid point.
    pub fn moments(&self, row: &CompiledRow) -> Vec<(f64, f64)> {
        self.states
            .iter()
            .zip(&self.means)
            .map(|(st, mean)| {
                let m = row.row.dot(mean);
                let mut v: f64 = row.cov_terms.iter().map(|&(g, c)| c * st.cov[g]).sum();
                if !st.w.is_empty() {
                    let u: Vec<f64> = st.w.iter().map(|wc| row.w_terms.iter().map(|&(k, a)| a * wc[k]).sum()).collect();
                    let u = DVector::from_vec(u);
                    v -= u.dot(&(&st.s_inv * &u));
                }
                (m, v.max(0.0))
            })
            .collect()
    }

    /// Mixture marginal of `aᵀθ + offset`, adding `extra_variance(ψ_h)` to
    /// each component's variance.
    pub fn marginal(
        &self,
        row: &CompiledRow,
        offset: f64,
        extra_variance: &dyn Fn(&[f64]) -> f64,
        scale: Scale,
    ) -> Result<MixtureMarginal> {
        let comps = self
            .moments(row)
            .into_iter()
            .zip(&self.psis)
            .zip(&self.weights)
            .map(|(((m, v), psi), &w)| MixtureComponent {
                mean: m + offset,
                sd: (v + extra_variance(psi)).max(0.0).sqrt(),
                weight: w,
            })
            .collect();
        MixtureMarginal::new(comps, scale)
    }
}

/// Gaussian conditional at the grid mode, exposed for diagnostics.
pub fn conditional_at_mode(fit: &InlaFit) -> Result<ConditionalGaussian> {
    conditional_posterior(&fit.model, &fit.mode_psi)
}
