//! Run configuration. A JSON file mirrors every command-line flag; flags
//! given on the command line override the file. A manifest written by an
//! earlier run is also accepted as a configuration, which replays that run.

use std::path::{Path, PathBuf};

use dimaq::evaluation::{CvOptions, R2Scale, SplitPlan};
use dimaq::simulate::WorldConfig;
use dimaq::{FitOptions, InputPaths, LoadOptions, PredictionOptions, Variant};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Where the four input tables live. Individual files override the
/// directory's standard names.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputConfig {
    pub dir: Option<PathBuf>,
    pub monitors: Option<PathBuf>,
    pub cells: Option<PathBuf>,
    pub hierarchy: Option<PathBuf>,
    pub adjacency: Option<PathBuf>,
}

impl InputConfig {
    /// Resolves the four paths and checks that each exists.
    pub fn resolve(&self) -> Result<InputPaths> {
        let base = self.dir.as_deref().map(InputPaths::in_dir);
        let pick = |explicit: &Option<PathBuf>, from_dir: Option<&PathBuf>, role: &str| -> Result<PathBuf> {
            explicit
                .clone()
                .or_else(|| from_dir.cloned())
                .ok_or_else(|| CliError::Usage(format!("no {role} input: pass --input DIR or --{role} FILE")))
        };
        let paths = InputPaths {
            monitors: pick(&self.monitors, base.as_ref().map(|b| &b.monitors), "monitors")?,
            cells: pick(&self.cells, base.as_ref().map(|b| &b.cells), "cells")?,
            hierarchy: pick(&self.hierarchy, base.as_ref().map(|b| &b.hierarchy), "hierarchy")?,
            adjacency: pick(&self.adjacency, base.as_ref().map(|b| &b.adjacency), "adjacency")?,
        };
        let missing: Vec<String> =
            paths.all().iter().filter(|p| !p.is_file()).map(|p| p.display().to_string()).collect();
        if !missing.is_empty() {
            return Err(CliError::Usage(format!("input files not found: {}", missing.join(", "))));
        }
        Ok(paths)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExposureConfig {
    /// Concentration (µg/m³) against which the population fraction is
    /// reported.
    pub guideline: f64,
    /// Width of the exposure histogram bins (µg/m³).
    pub bin_width: f64,
}

impl Default for ExposureConfig {
    fn default() -> Self {
        Self { guideline: 10.0, bin_width: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub n_splits: usize,
    pub validation_fraction: f64,
    pub r2_scale: R2Scale,
    pub include_noise: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        let plan = SplitPlan::default();
        Self { n_splits: plan.n_splits, validation_fraction: plan.validation_fraction, r2_scale: R2Scale::default(), include_noise: false }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub input: InputConfig,
    pub output: Option<PathBuf>,
    /// Mandatory for `simulate` and `cv`.
    pub seed: Option<u64>,
    /// Worker threads; absent means one per available core.
    pub threads: Option<usize>,
    /// Variant fitted by `fit`.
    pub variant: Option<Variant>,
    /// Variants compared by `cv`.
    pub variants: Vec<Variant>,
    /// Fit artifact read by `predict` and `report`.
    pub artifact: Option<PathBuf>,
    /// Exposure summary read by `report`.
    pub exposure_file: Option<PathBuf>,
    pub load: LoadOptions,
    pub fit: FitOptions,
    pub prediction: PredictionOptions,
    pub exposure: ExposureConfig,
    pub cv: CvConfig,
    pub world: WorldConfig,
}

impl RunConfig {
    /// Reads a configuration file, or the configuration echoed in a manifest.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let config = match value.get("config") {
            Some(inner) if value.get("tool").is_some() => inner.clone(),
            _ => value,
        };
        serde_json::from_value(config).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn output_dir(&self) -> Result<&Path> {
        self.output.as_deref().ok_or_else(|| CliError::Usage("no output directory: pass --out DIR".into()))
    }

    pub fn require_seed(&self, command: &str) -> Result<u64> {
        self.seed.ok_or_else(|| CliError::Usage(format!("a seed is mandatory for {command}: pass --seed N")))
    }

    pub fn cv_options(&self, seed: u64) -> CvOptions {
        CvOptions {
            plan: SplitPlan { n_splits: self.cv.n_splits, validation_fraction: self.cv.validation_fraction, seed },
            fit: self.fit.clone(),
            r2_scale: self.cv.r2_scale,
            include_noise: self.cv.include_noise,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"seed": 3, "prediction": {"chunk_size": 9}}"#).unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.prediction.chunk_size, 9);
        assert_eq!(c.prediction.thresholds, PredictionOptions::default().thresholds);
        assert_eq!(c.cv.n_splits, 25);
    }

    #[test]
    fn missing_inputs_are_named() {
        let c = InputConfig { dir: Some(PathBuf::from("/nonexistent/world")), ..Default::default() };
        let msg = c.resolve().unwrap_err().to_string();
        assert!(msg.contains("/nonexistent/world/monitors.csv"), "{msg}");
    }
}
