//! Hierarchical calibration of satellite and chemical-transport estimates
//! of fine particulate matter against ground monitors.
//!
//! The crate covers the whole pipeline: loading and validating the
//! geographic hierarchy, monitors and grid cells ([`data`], [`hierarchy`]);
//! PM10 conversion ([`convert`]); building the five model variants as
//! latent Gaussian models ([`model`]) and fitting them ([`fitting`]); cell
//! predictions and population exposure ([`prediction`]); the global
//! least-squares baseline ([`baseline`]); repeated stratified
//! cross-validation ([`evaluation`]); and a synthetic-world generator with a
//! known truth ([`simulate`]).

pub mod baseline;
pub mod convert;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod fitting;
pub mod hierarchy;
pub mod model;
pub mod prediction;
pub mod simulate;

pub use data::{validate_inputs, Dataset, GridCellRecord, InputPaths, LoadOptions, MonitorRecord, Pollutant};
pub use error::{DimaqError, Result};
pub use fitting::{fit_variant, FitArtifact, FitOptions, FittedVariant, ObservationFingerprint, ParameterSummary};
pub use hierarchy::GeoHierarchy;
pub use model::{build_model, Covariate, DimaqModel, ModelOptions, ModelSpec, Variant};
pub use prediction::{predict_cells, CellPosterior, PredictionOptions, Predictor};
