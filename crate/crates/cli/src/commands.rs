use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use dimaq::convert::convert_dataset;
use dimaq::evaluation::cross_validate;
use dimaq::prediction::{population_exposure, ExposureSummary, PredictionWriter};
use dimaq::simulate::simulate_world;
use dimaq::{fit_variant, validate_inputs, Dataset, FitArtifact, InputPaths, LoadOptions, ModelSpec, Predictor};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::manifest::{input_hashes, Manifest};

const ARTIFACT_FILE: &str = "fit.json";
const PREDICTIONS_FILE: &str = "predictions.csv";
const EXPOSURE_FILE: &str = "exposure.json";

fn output_dir(config: &RunConfig) -> Result<&Path> {
    let dir = config.output_dir()?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Loads the inputs with PM10-only monitors converted to PM2.5.
fn load(paths: &InputPaths, options: &LoadOptions) -> Result<Dataset> {
    let data = Dataset::load(paths, options)?;
    log::info!(
        "loaded {} monitors, {} cells, {} countries",
        data.monitors.len(),
        data.cells.len(),
        data.hierarchy.countries().len()
    );
    Ok(convert_dataset(&data)?)
}

fn artifact_path(config: &RunConfig) -> Result<PathBuf> {
    match (&config.artifact, &config.output) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(dir)) => Ok(dir.join(ARTIFACT_FILE)),
        (None, None) => Err(CliError::Usage("no fit artifact: pass --artifact FILE".into())),
    }
}

fn read_artifact(path: &Path) -> Result<FitArtifact> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    FitArtifact::from_json(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Restores a fit on the current inputs, refusing inputs that differ from
/// those the artifact was fitted on.
fn restore(config: &RunConfig) -> Result<(FitArtifact, dimaq::FittedVariant, Dataset, std::collections::BTreeMap<String, String>)> {
    let artifact = read_artifact(&artifact_path(config)?)?;
    let paths = config.input.resolve()?;
    let hashes = input_hashes(&paths)?;
    let changed: Vec<&str> = artifact
        .input_hashes
        .iter()
        .filter(|(role, h)| hashes.get(*role).is_some_and(|now| now != *h))
        .map(|(role, _)| role.as_str())
        .collect();
    if !changed.is_empty() {
        return Err(CliError::Usage(format!("inputs changed since the fit: {}", changed.join(", "))));
    }
    let data = load(&paths, &artifact.load)?;
    let fitted = artifact.restore(&data)?;
    Ok((artifact, fitted, data, hashes))
}

pub fn simulate(config: &RunConfig) -> Result<()> {
    let seed = config.require_seed("simulate")?;
    let dir = output_dir(config)?;
    let world = simulate_world(&config.world, seed)?;
    world.write(dir)?;
    log::info!("wrote a world of {} monitors and {} cells to {}", world.data.monitors.len(), world.data.cells.len(), dir.display());
    Manifest::new("simulate", config, Default::default())
        .write(dir, &["monitors.csv", "cells.csv", "hierarchy.csv", "adjacency.csv", "truth.json"])
}

pub fn validate(config: &RunConfig) -> Result<()> {
    let paths = config.input.resolve()?;
    let findings = validate_inputs(&paths, &config.load);
    for f in &findings {
        println!("{f}");
    }
    if let Some(dir) = &config.output {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        write_text(&dir.join("findings.json"), &(serde_json::to_string_pretty(&findings)? + "\n"))?;
    }
    if findings.is_empty() {
        println!("no findings");
        Ok(())
    } else {
        println!("{} findings", findings.len());
        Err(CliError::Findings(findings.len()))
    }
}

pub fn fit(config: &RunConfig) -> Result<()> {
    let variant = config.variant.ok_or_else(|| CliError::Usage("no variant: pass --variant (i, ii, iii, iv or v)".into()))?;
    let paths = config.input.resolve()?;
    let dir = output_dir(config)?;
    let hashes = input_hashes(&paths)?;
    let data = load(&paths, &config.load)?;
    let fitted = fit_variant(&ModelSpec::for_variant(variant), &data, &config.fit)?;
    let artifact = FitArtifact::new(&fitted, &config.fit, &config.load, hashes.clone())?;
    write_text(&dir.join(ARTIFACT_FILE), &(artifact.to_json()? + "\n"))?;
    log::info!("variant {variant}: DIC {:.2}; artifact written to {}", artifact.dic, dir.join(ARTIFACT_FILE).display());
    Manifest::new("fit", config, hashes).write(dir, &[ARTIFACT_FILE])
}

pub fn predict(config: &RunConfig) -> Result<()> {
    let dir = output_dir(config)?;
    let (_, fitted, data, hashes) = restore(config)?;
    let predictor = Predictor::new(&fitted, &data.cells, &config.prediction)?;
    let mut writer = PredictionWriter::new(create(&dir.join(PREDICTIONS_FILE))?, &config.prediction.thresholds)?;
    let mut medians = Vec::with_capacity(predictor.len());
    let mut done = 0;
    predictor.run(|chunk| {
        writer.write(&chunk)?;
        medians.extend(chunk.iter().map(|p| (p.cell_id, p.summary.median, p.fallback)));
        done += chunk.len();
        log::debug!("predicted {done} of {} cells", predictor.len());
        Ok(())
    })?;
    writer.finish()?;
    let exposure = population_exposure(&medians, &data.cells, config.exposure.guideline, config.exposure.bin_width)?;
    write_text(&dir.join(EXPOSURE_FILE), &(serde_json::to_string_pretty(&exposure)? + "\n"))?;
    log::info!(
        "{} cells predicted; {:.1}% of the population lives above {} µg/m³",
        medians.len(),
        100.0 * exposure.fraction_above,
        exposure.guideline
    );
    Manifest::new("predict", config, hashes).write(dir, &[PREDICTIONS_FILE, EXPOSURE_FILE])
}

pub fn cv(config: &RunConfig) -> Result<()> {
    let seed = config.require_seed("cv")?;
    if config.variants.is_empty() {
        return Err(CliError::Usage("no variants: pass --variants, e.g. i,ii,iv".into()));
    }
    let paths = config.input.resolve()?;
    let dir = output_dir(config)?;
    let hashes = input_hashes(&paths)?;
    let data = load(&paths, &config.load)?;
    let table = cross_validate(&data, &config.variants, &config.cv_options(seed))?;
    if table.failures() > 0 {
        log::warn!("{} variant-split fits failed; see metrics_long.csv", table.failures());
    }
    table.write_summary(create(&dir.join("metrics.csv"))?)?;
    table.write_long(create(&dir.join("metrics_long.csv"))?)?;
    for v in table.variants() {
        if let (Some(rmse), Some(pw)) = (table.summary(v, "rmse"), table.summary(v, "pwrmse")) {
            log::info!("variant {v}: median RMSE {:.3}, median PwRMSE {:.3}", rmse.median, pw.median);
        }
    }
    Manifest::new("cv", config, hashes).write(dir, &["metrics.csv", "metrics_long.csv"])
}

pub fn report(config: &RunConfig) -> Result<()> {
    let dir = output_dir(config)?;
    let (artifact, fitted, _, hashes) = restore(config)?;
    let mut text = String::new();
    let _ = writeln!(text, "variant {} fitted on {} observations", artifact.spec.variant, fitted.model.lgm.n_obs());
    let _ = writeln!(text, "DIC {:.3}; {} hyperparameter grid points", artifact.dic, fitted.fit.points().len());
    for (title, effects) in [("fixed effects (raw covariate scale)", &artifact.raw_fixed_effects), ("fixed effects (standardized covariates)", &artifact.fixed_effects)] {
        let _ = writeln!(text, "\n{title}");
        let _ = writeln!(text, "{:<12} {:>11} {:>11} {:>11} {:>11} {:>11}", "term", "mean", "sd", "2.5%", "median", "97.5%");
        for (name, s) in effects {
            let _ = writeln!(text, "{name:<12} {:>11.5} {:>11.5} {:>11.5} {:>11.5} {:>11.5}", s.mean, s.sd, s.q025, s.median, s.q975);
        }
    }

    let marginals = fitted.hyperparameter_marginals()?;
    let mut csv = String::from("slot,log_precision,mass,density\n");
    let _ = writeln!(text, "\nhyperparameters (log precision)");
    let _ = writeln!(text, "{:<28} {:>11} {:>11}", "slot", "mean", "sd");
    for (slot, bins) in &marginals {
        let width = if bins.len() > 1 { bins[1].0 - bins[0].0 } else { f64::NAN };
        for &(x, m) in bins {
            let density = if width.is_finite() { (m / width).to_string() } else { String::new() };
            let _ = writeln!(csv, "{slot},{x},{m},{density}");
        }
        let mean: f64 = bins.iter().map(|(x, m)| x * m).sum();
        let sd = bins.iter().map(|(x, m)| m * (x - mean).powi(2)).sum::<f64>().sqrt();
        let _ = writeln!(text, "{slot:<28} {mean:>11.4} {sd:>11.4}");
    }

    let exposure_path = config.exposure_file.clone().unwrap_or_else(|| dir.join(EXPOSURE_FILE));
    if exposure_path.is_file() {
        let raw = std::fs::read_to_string(&exposure_path).map_err(|e| CliError::io(&exposure_path, e))?;
        let e: ExposureSummary = serde_json::from_str(&raw)?;
        let _ = writeln!(
            text,
            "\n{:.1}% of the population lives in cells whose median exceeds {} µg/m³ ({} fallback cells)",
            100.0 * e.fraction_above,
            e.guideline,
            e.fallback_cells.len()
        );
    } else if config.exposure_file.is_some() {
        return Err(CliError::Usage(format!("exposure summary {} not found", exposure_path.display())));
    }

    print!("{text}");
    write_text(&dir.join("report.txt"), &text)?;
    write_text(&dir.join("hyperparameters.csv"), &csv)?;
    Manifest::new("report", config, hashes).write(dir, &["report.txt", "hyperparameters.csv"])
}
