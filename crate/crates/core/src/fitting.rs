//! Fitting a variant, posterior summaries of its parameters, and the fit
//! artifact that lets prediction resume without re-running the search.

use std::collections::BTreeMap;

use inla::{fit, HyperGrid, InlaConfig, InlaFit, MixtureMarginal, ModeResult, Scale};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LoadOptions};
use crate::error::{DimaqError, Result};
use crate::model::{build_model, DimaqModel, ModelOptions, ModelSpec};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub inla: InlaConfig,
    pub model: ModelOptions,
}

/// A built variant and its nested-Laplace fit.
#[derive(Debug, Clone)]
pub struct FittedVariant {
    pub model: DimaqModel,
    pub fit: InlaFit,
}

pub fn fit_variant(spec: &ModelSpec, data: &Dataset, options: &FitOptions) -> Result<FittedVariant> {
    let model = build_model(spec, data, &options.model)?;
    log::info!(
        "variant {}: {} observations, θ-dim {}, {} free hyperparameters",
        spec.variant,
        model.lgm.n_obs(),
        model.lgm.theta_dim(),
        model.lgm.free_slots().len()
    );
    let fit = fit(&model.lgm, &options.inla, None)?;
    log::info!("variant {}: {} grid points", spec.variant, fit.points().len());
    Ok(FittedVariant { model, fit })
}

/// Posterior summary of one scalar quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub median: f64,
    pub q975: f64,
}

impl ParameterSummary {
    pub fn from_marginal(m: &MixtureMarginal) -> Result<Self> {
        Ok(Self { mean: m.mean(), sd: m.sd(), q025: m.quantile(0.025)?, median: m.median()?, q975: m.quantile(0.975)? })
    }

    pub fn covers(&self, value: f64) -> bool {
        self.q025 <= value && value <= self.q975
    }
}

impl FittedVariant {
    /// Fixed effects on the standardized scale, by term name.
    pub fn fixed_effects(&self) -> Result<BTreeMap<String, ParameterSummary>> {
        self.model
            .terms
            .iter()
            .enumerate()
            .map(|(j, t)| Ok((t.name(), ParameterSummary::from_marginal(&self.fit.marginal_latent(j)?)?)))
            .collect()
    }

    /// Fixed effects on the raw covariate scale, by term name.
    pub fn raw_fixed_effects(&self) -> Result<BTreeMap<String, ParameterSummary>> {
        let rows = self.model.raw_fixed_rows();
        let cliques: Vec<Vec<usize>> = vec![(0..self.model.n_fixed()).collect()];
        let set = self.fit.combination_set(&cliques)?;
        rows.into_iter()
            .map(|(name, row)| {
                let compiled = set.compile(&row)?;
                let m = set.marginal(&compiled, 0.0, &|_| 0.0, Scale::Natural)?;
                Ok((name, ParameterSummary::from_marginal(&m)?))
            })
            .collect()
    }

    /// Discrete posterior of every hyperparameter slot on the log-precision
    /// scale, as `(value, mass)` pairs, keyed by slot name.
    pub fn hyperparameter_marginals(&self) -> Result<BTreeMap<String, Vec<(f64, f64)>>> {
        self.model
            .lgm
            .slots()
            .iter()
            .enumerate()
            .map(|(k, s)| Ok((s.name.clone(), self.fit.marginal_hyperparameter(k)?)))
            .collect()
    }
}

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationFingerprint {
    pub n_obs: usize,
    pub theta_dim: usize,
    /// FNV-1a over the bit patterns of the responses and offsets.
    pub digest: u64,
}

impl ObservationFingerprint {
    fn of(model: &DimaqModel) -> Self {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in model.lgm.y().iter().chain(model.lgm.offset()) {
            for b in v.to_bits().to_le_bytes() {
                h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        Self { n_obs: model.lgm.n_obs(), theta_dim: model.lgm.theta_dim(), digest: h }
    }
}

/// Everything needed to rebuild a fit: the configuration, the hyperparameter
/// mode and grid, and a record of the inputs and headline results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArtifact {
    pub version: u32,
    pub spec: ModelSpec,
    pub options: FitOptions,
    pub load: LoadOptions,
    /// SHA-256 of each input file, keyed by file role.
    pub input_hashes: BTreeMap<String, String>,
    pub slot_names: Vec<String>,
    /// Observation count, latent dimension and a digest of the responses,
    /// checked on restore so that an artifact is never applied to other data.
    pub observations: ObservationFingerprint,
    pub mode: ModeResult,
    pub grid: HyperGrid,
    /// Full hyperparameter vector at the lattice origin (fixed slots
    /// included).
    pub mode_psi: Vec<f64>,
    pub fixed_effects: BTreeMap<String, ParameterSummary>,
    pub raw_fixed_effects: BTreeMap<String, ParameterSummary>,
    pub dic: f64,
}

impl FitArtifact {
    pub fn new(
        fitted: &FittedVariant,
        options: &FitOptions,
        load: &LoadOptions,
        input_hashes: BTreeMap<String, String>,
    ) -> Result<Self> {
        Ok(Self {
            version: ARTIFACT_VERSION,
            spec: fitted.model.spec.clone(),
            options: options.clone(),
            load: load.clone(),
            input_hashes,
            slot_names: fitted.model.lgm.slots().iter().map(|s| s.name.clone()).collect(),
            observations: ObservationFingerprint::of(&fitted.model),
            mode: fitted.fit.mode().clone(),
            grid: fitted.fit.grid().clone(),
            mode_psi: fitted.fit.mode_psi().to_vec(),
            fixed_effects: fitted.fixed_effects()?,
            raw_fixed_effects: fitted.raw_fixed_effects()?,
            dic: fitted.fit.dic()?.dic,
        })
    }

    /// Rebuilds the model on `data` (which must be the data the artifact was
    /// fitted on) and re-evaluates the stored grid.
    pub fn restore(&self, data: &Dataset) -> Result<FittedVariant> {
        if self.version != ARTIFACT_VERSION {
            return Err(DimaqError::Config(format!("artifact version {} is not supported", self.version)));
        }
        let model = build_model(&self.spec, data, &self.options.model)?;
        let names: Vec<String> = model.lgm.slots().iter().map(|s| s.name.clone()).collect();
        if names != self.slot_names {
            return Err(DimaqError::Config(format!(
                "artifact slots {:?} do not match the rebuilt model's {:?}; were the inputs changed?",
                self.slot_names, names
            )));
        }
        let found = ObservationFingerprint::of(&model);
        if found != self.observations {
            return Err(DimaqError::Config(format!(
                "artifact was fitted on {} observations (θ-dim {}, digest {:016x}) but the inputs give {} (θ-dim {}, digest {:016x})",
                self.observations.n_obs,
                self.observations.theta_dim,
                self.observations.digest,
                found.n_obs,
                found.theta_dim,
                found.digest
            )));
        }
        let fit = InlaFit::from_grid(&model.lgm, &self.options.inla, self.mode.clone(), self.grid.clone(), &self.mode_psi)?;
        Ok(FittedVariant { model, fit })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
