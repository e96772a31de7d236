//! Gaussian conditional of the latent field given hyperparameters, and the
//! hyperparameter log posterior derived from it.
//!
//! With Gaussian observations `θ | ψ, y` is exactly Gaussian with precision
//! `Q_prior(ψ) + τ_ε AᵀA`, so the Laplace approximation of `p(ψ | y)` is the
//! exact marginal likelihood. Sum-to-zero constraints on ICAR blocks are
//! imposed by conditioning on `Cθ = 0` after factorization.

use gmrf::{CholeskyFactor, SelectedInverse, SparsePrecision};
use nalgebra::{DMatrix, DVector};

use crate::error::{InlaError, Result};
use crate::model::{gaussian_loglik, LatentGaussianModel, SparseRow};

/// Correction terms for the constraint `Cθ = 0`: `W = Q⁻¹Cᵀ` (one column per
/// constraint) and `S⁻¹ = (C Q⁻¹ Cᵀ)⁻¹`.
#[derive(Debug, Clone)]
pub struct ConstraintCorrection {
    pub w: Vec<Vec<f64>>,
    pub s_inv: DMatrix<f64>,
}

impl ConstraintCorrection {
    fn new(factor: &CholeskyFactor, sets: &[Vec<usize>]) -> Result<(Self, f64)> {
        let n = factor.dim();
        let k = sets.len();
        let mut w = Vec::with_capacity(k);
        for set in sets {
            let mut e = vec![0.0; n];
            for &i in set {
                e[i] = 1.0;
            }
            w.push(factor.solve(&e)?);
        }
        let s = DMatrix::from_fn(k, k, |a, b| sets[a].iter().map(|&i| w[b][i]).sum::<f64>());
        let chol = s
            .clone()
            .cholesky()
            .ok_or_else(|| InlaError::Numerical("constraint covariance is not positive definite".into()))?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok((Self { w, s_inv: chol.inverse() }, log_det))
    }

    /// `uᵀ S⁻¹ u` for `u = Wᵀ a`.
    pub fn reduction(&self, u: &[f64]) -> f64 {
        let u = DVector::from_column_slice(u);
        u.dot(&(&self.s_inv * &u))
    }
}

/// Exact Gaussian conditional `θ | ψ, y`.
#[derive(Debug, Clone)]
pub struct ConditionalGaussian {
    psi: Vec<f64>,
    precision: SparsePrecision,
    factor: CholeskyFactor,
    mean: Vec<f64>,
    correction: Option<ConstraintCorrection>,
    log_marginal_likelihood: f64,
}

/// Posterior precision, mean and log marginal likelihood at `psi`.
pub fn conditional_posterior(model: &LatentGaussianModel, psi: &[f64]) -> Result<ConditionalGaussian> {
    model.check_psi(psi)?;
    let st = &model.structure;
    let tau = psi[model.noise_slot()].exp();
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(InlaError::InvalidHyperparameter(format!("noise precision exp({}) is not usable", psi[model.noise_slot()])));
    }

    let prior = model.assemble_prior_precision(psi)?;
    let prior_factor = st.prior_symbolic.as_ref().expect("built").factor(&prior)?;

    let post_pattern = st.post_pattern.as_ref().expect("built");
    let mut values: Vec<f64> = st.ata.iter().map(|v| tau * v).collect();
    for (k, &p) in st.prior_to_post.iter().enumerate() {
        values[p] += prior.values()[k];
    }
    let precision = SparsePrecision::from_parts(std::sync::Arc::clone(post_pattern), values)?;
    let factor = st.post_symbolic.as_ref().expect("built").factor(&precision)?;

    let n = model.theta_dim();
    let mut b = vec![0.0; n];
    for (s, row) in st.rows.iter().enumerate() {
        let r = tau * (model.y()[s] - model.offset()[s]);
        for (i, v) in row.iter() {
            b[i] += v * r;
        }
    }
    let mut mean = factor.solve(&b)?;

    let sets = &st.constraints;
    let (correction, constraint_terms) = if sets.is_empty() {
        (None, 0.0)
    } else {
        let (corr, log_det_s) = ConstraintCorrection::new(&factor, sets)?;
        let (_, log_det_k) = ConstraintCorrection::new(&prior_factor, sets)?;
        let c_mean: Vec<f64> = sets.iter().map(|set| set.iter().map(|&i| mean[i]).sum()).collect();
        let shift = &corr.s_inv * DVector::from_vec(c_mean);
        for (a, wa) in corr.w.iter().enumerate() {
            for (m, w) in mean.iter_mut().zip(wa) {
                *m -= w * shift[a];
            }
        }
        (Some(corr), 0.5 * log_det_k - 0.5 * log_det_s)
    };

    // log p(y|ψ) = log p(y|θ*) + log p(θ*|ψ) − log p(θ*|ψ,y) at θ* = mean; the
    // 2π factors of the two Gaussian densities cancel.
    let eta = model.linear_predictor(&mean)?;
    let loglik = gaussian_loglik(model.y(), &eta, tau)?;
    let log_marginal_likelihood = loglik + 0.5 * prior_factor.log_det() - 0.5 * prior.quad_form(&mean)?
        - 0.5 * factor.log_det()
        + constraint_terms;
    if !log_marginal_likelihood.is_finite() {
        return Err(InlaError::Numerical(format!("log marginal likelihood is not finite at ψ = {psi:?}")));
    }

    Ok(ConditionalGaussian { psi: psi.to_vec(), precision, factor, mean, correction, log_marginal_likelihood })
}

/// Unnormalized `log p̃(ψ | y) = log p(y | ψ) + log p(ψ)`.
pub fn log_hyper_posterior(model: &LatentGaussianModel, psi: &[f64]) -> Result<f64> {
    Ok(conditional_posterior(model, psi)?.log_marginal_likelihood + model.log_hyper_prior(psi))
}

impl ConditionalGaussian {
    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    pub fn precision(&self) -> &SparsePrecision {
        &self.precision
    }

    pub fn factor(&self) -> &CholeskyFactor {
        &self.factor
    }

    /// Posterior mean `θ̂(ψ)`, constrained when the model has constraints.
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn correction(&self) -> Option<&ConstraintCorrection> {
        self.correction.as_ref()
    }

    /// `log p(y | ψ)`.
    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    /// Posterior variances from triangular solves against unit vectors.
    pub fn marginal_variances(&self) -> Vec<f64> {
        let mut var = self.factor.marginal_variances();
        self.correct_diagonal(&mut var);
        var
    }

    pub fn selected_inverse(&self) -> SelectedInverse {
        self.factor.selected_inverse()
    }

    /// Posterior variances read from a selected inverse of this factor.
    pub fn variances_from(&self, selinv: &SelectedInverse) -> Vec<f64> {
        let mut var = selinv.diagonal();
        self.correct_diagonal(&mut var);
        var
    }

    fn correct_diagonal(&self, var: &mut [f64]) {
        if let Some(c) = &self.correction {
            let mut u = vec![0.0; c.w.len()];
            for (j, v) in var.iter_mut().enumerate() {
                for (a, wa) in c.w.iter().enumerate() {
                    u[a] = wa[j];
                }
                *v -= c.reduction(&u);
            }
        }
    }

    /// Posterior mean of `aᵀθ`.
    pub fn combination_mean(&self, row: &SparseRow) -> f64 {
        row.dot(&self.mean)
    }

    /// Posterior variance of `aᵀθ`. Every pair of indices in `row` must lie on
    /// the factor pattern (rows of the design always do).
    pub fn combination_variance(&self, selinv: &SelectedInverse, row: &SparseRow) -> Result<f64> {
        let idx = row.indices();
        let val = row.values();
        let mut acc = 0.0;
        for a in 0..idx.len() {
            for b in a..idx.len() {
                let s = selinv.get(idx[a], idx[b]).ok_or_else(|| {
                    InlaError::InvalidArgument(format!("pair ({}, {}) is not on the factor pattern", idx[a], idx[b]))
                })?;
                acc += if a == b { val[a] * val[a] * s } else { 2.0 * val[a] * val[b] * s };
            }
        }
        if let Some(c) = &self.correction {
            let u: Vec<f64> = c.w.iter().map(|w| row.dot(w)).collect();
            acc -= c.reduction(&u);
        }
        Ok(acc.max(0.0))
    }
}
