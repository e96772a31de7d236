//! Out-of-sample evaluation: stratified repeated splits, per-split fits and
//! the metric table.
//!
//! Monitors are stratified by PM2.5 concentration category crossed with
//! super-region, and a fixed share of each stratum is held out per split.
//! Goodness of fit (R², DIC) is measured on the training fit; RMSE and
//! population-weighted RMSE on the held-out monitors.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use inla::Scale;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::fit_monitors;
use crate::data::{Dataset, MonitorRecord};
use crate::error::{DimaqError, Result};
use crate::fitting::{fit_variant, FitOptions};
use crate::model::{ModelSpec, Variant};

/// Upper bounds (exclusive) of the concentration categories; the last
/// category is open-ended.
pub const CATEGORY_BREAKS: [f64; 4] = [25.0, 50.0, 75.0, 100.0];

pub fn concentration_category(value: f64) -> usize {
    CATEGORY_BREAKS.iter().take_while(|&&b| value >= b).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitPlan {
    pub n_splits: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for SplitPlan {
    fn default() -> Self {
        Self { n_splits: 25, validation_fraction: 0.2, seed: 20160601 }
    }
}

/// Stratum key `(category, super-region)` of every monitor.
pub fn strata(data: &Dataset) -> Result<Vec<(usize, usize)>> {
    data.monitors
        .iter()
        .map(|m| {
            let c = data.hierarchy.country_index(&m.country_id).ok_or_else(|| DimaqError::Unresolved {
                kind: "countries".into(),
                ids: vec![m.country_id.clone()],
            })?;
            Ok((concentration_category(m.value), data.hierarchy.super_region_of(c)))
        })
        .collect()
}

/// Training and validation monitor indices of split `split`. Each stratum
/// of size `n` contributes `round(fraction · n)` validation monitors, chosen
/// by a shuffle from a generator seeded by the plan seed on stream `split`;
/// strata with a single monitor stay in training.
pub fn stratified_split(keys: &[(usize, usize)], plan: &SplitPlan, split: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&plan.validation_fraction) {
        return Err(DimaqError::Config(format!("validation fraction must lie in [0, 1), got {}", plan.validation_fraction)));
    }
    let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, k) in keys.iter().enumerate() {
        groups.entry(*k).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    rng.set_stream(split as u64);
    let mut validation = Vec::new();
    for (key, mut members) in groups {
        if members.len() == 1 {
            log::debug!("stratum {key:?} has a single monitor; it stays in training");
            continue;
        }
        let k = (plan.validation_fraction * members.len() as f64).round() as usize;
        members.shuffle(&mut rng);
        validation.extend_from_slice(&members[..k]);
    }
    validation.sort_unstable();
    let held: BTreeSet<usize> = validation.iter().copied().collect();
    let training = (0..keys.len()).filter(|i| !held.contains(i)).collect();
    Ok((training, validation))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub r2: f64,
    pub rmse: f64,
    pub pwrmse: f64,
}

/// R², RMSE and population-weighted RMSE of `predicted` against
/// `observed`, on whatever scale they are given.
pub fn compute_metrics(predicted: &[f64], observed: &[f64], population: &[f64]) -> Result<Metrics> {
    let n = observed.len();
    if predicted.len() != n || population.len() != n {
        return Err(DimaqError::Config("predicted, observed and population must have equal length".into()));
    }
    if n == 0 {
        return Err(DimaqError::InsufficientData("no observations to evaluate".into()));
    }
    if population.iter().any(|p| !(*p >= 0.0)) {
        return Err(DimaqError::Config("populations must be non-negative".into()));
    }
    let total_pop: f64 = population.iter().sum();
    if total_pop == 0.0 {
        return Err(DimaqError::InsufficientData("total population of the evaluated monitors is zero".into()));
    }
    let mean = observed.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = observed.iter().map(|o| (o - mean).powi(2)).sum();
    let sq: Vec<f64> = predicted.iter().zip(observed).map(|(p, o)| (p - o).powi(2)).collect();
    let ss_res: f64 = sq.iter().sum();
    if ss_tot == 0.0 {
        return Err(DimaqError::InsufficientData("observations have zero variance; R² is undefined".into()));
    }
    Ok(Metrics {
        r2: 1.0 - ss_res / ss_tot,
        rmse: (ss_res / n as f64).sqrt(),
        pwrmse: (sq.iter().zip(population).map(|(s, p)| s * p).sum::<f64>() / total_pop).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum R2Scale {
    /// Concentrations (µg/m³).
    #[default]
    Natural,
    /// Log concentrations.
    Log,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CvOptions {
    pub plan: SplitPlan,
    pub fit: FitOptions,
    pub r2_scale: R2Scale,
    /// Include measurement noise in the predictive distribution whose
    /// median is compared with held-out monitors.
    pub include_noise: bool,
}

/// Outcome of one variant on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitOutcome {
    pub variant: Variant,
    pub split: usize,
    pub r2: Option<f64>,
    pub dic: Option<f64>,
    pub rmse: Option<f64>,
    pub pwrmse: Option<f64>,
    pub error: Option<String>,
}

/// Natural-scale medians for `targets` and `training` monitors from a fit
/// on `train`.
struct SplitPredictions {
    training: Vec<f64>,
    validation: Vec<f64>,
    dic: f64,
}

fn predict_split(
    variant: Variant,
    data: &Dataset,
    train: &[MonitorRecord],
    validation: &[MonitorRecord],
    options: &CvOptions,
) -> Result<SplitPredictions> {
    let cell_of = |m: &MonitorRecord| {
        data.cell(m.cell_id).ok_or_else(|| DimaqError::Unresolved { kind: "cells".into(), ids: vec![m.cell_id.to_string()] })
    };
    if variant == Variant::I {
        let fit = fit_monitors(train, |id| data.cell(id))?;
        let pred = |ms: &[MonitorRecord]| -> Result<Vec<f64>> {
            ms.iter().map(|m| Ok(fit.predict_log(m.indicators(), cell_of(m)?).exp())).collect()
        };
        return Ok(SplitPredictions { training: pred(train)?, validation: pred(validation)?, dic: fit.dic() });
    }
    let training_data = data.with_monitors(train.to_vec())?;
    let fitted = fit_variant(&ModelSpec::for_variant(variant), &training_data, &options.fit)?;
    let rows = train
        .iter()
        .chain(validation)
        .map(|m| fitted.model.monitor_row(m, cell_of(m)?).map_err(DimaqError::from))
        .collect::<Result<Vec<_>>>()?;
    let cliques: BTreeSet<Vec<usize>> = rows.iter().map(|r| r.row.indices().to_vec()).collect();
    let set = fitted.fit.combination_set(&cliques.into_iter().collect::<Vec<_>>())?;
    let noise_slot = fitted.model.lgm.noise_slot();
    let medians = rows
        .iter()
        .map(|r| {
            let compiled = set.compile(&r.row)?;
            let extra = |psi: &[f64]| {
                r.extra_variance(psi) + if options.include_noise { (-psi[noise_slot]).exp() } else { 0.0 }
            };
            Ok(set.marginal(&compiled, 0.0, &extra, Scale::Log)?.median()?)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (training, validation) = medians.split_at(train.len());
    Ok(SplitPredictions { training: training.to_vec(), validation: validation.to_vec(), dic: fitted.fit.dic()?.dic })
}

fn evaluate_split(variant: Variant, data: &Dataset, split: usize, keys: &[(usize, usize)], options: &CvOptions) -> SplitOutcome {
    let mut out = SplitOutcome { variant, split, r2: None, dic: None, rmse: None, pwrmse: None, error: None };
    let run = || -> Result<(f64, f64, Metrics)> {
        let (tr, va) = stratified_split(keys, &options.plan, split)?;
        let train: Vec<MonitorRecord> = tr.iter().map(|&i| data.monitors[i].clone()).collect();
        let validation: Vec<MonitorRecord> = va.iter().map(|&i| data.monitors[i].clone()).collect();
        let p = predict_split(variant, data, &train, &validation, options)?;
        let obs_train: Vec<f64> = train.iter().map(|m| m.value).collect();
        let obs_val: Vec<f64> = validation.iter().map(|m| m.value).collect();
        let pop_train: Vec<f64> = train.iter().map(|m| data.population_of(m)).collect();
        let pop_val: Vec<f64> = validation.iter().map(|m| data.population_of(m)).collect();
        let r2 = match options.r2_scale {
            R2Scale::Natural => compute_metrics(&p.training, &obs_train, &pop_train)?.r2,
            R2Scale::Log => {
                let ln = |v: &[f64]| v.iter().map(|x| x.ln()).collect::<Vec<_>>();
                compute_metrics(&ln(&p.training), &ln(&obs_train), &pop_train)?.r2
            }
        };
        Ok((r2, p.dic, compute_metrics(&p.validation, &obs_val, &pop_val)?))
    };
    match run() {
        Ok((r2, dic, m)) => {
            out.r2 = Some(r2);
            out.dic = Some(dic);
            out.rmse = Some(m.rmse);
            out.pwrmse = Some(m.pwrmse);
        }
        Err(e) => {
            log::warn!("variant {variant}, split {split}: {e}");
            out.error = Some(e.to_string());
        }
    }
    out
}

/// Runs every variant on every split. Variant (i) is the global
/// least-squares calibration; the others are hierarchical fits. A failed
/// fit is recorded in its row and the run continues.
pub fn cross_validate(data: &Dataset, variants: &[Variant], options: &CvOptions) -> Result<MetricTable> {
    let keys = strata(data)?;
    let jobs: Vec<(Variant, usize)> =
        variants.iter().flat_map(|&v| (0..options.plan.n_splits).map(move |s| (v, s))).collect();
    let outcomes: Vec<SplitOutcome> = jobs
        .par_iter()
        .map(|&(v, s)| {
            let o = evaluate_split(v, data, s, &keys, options);
            log::info!("variant {v}, split {s} done");
            o
        })
        .collect();
    Ok(MetricTable { outcomes })
}

pub const METRIC_NAMES: [&str; 4] = ["r2", "dic", "rmse", "pwrmse"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub median: f64,
    pub min: f64,
    pub max: f64,
    /// Splits that contributed (failed splits are excluded).
    pub n: usize,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricTable {
    pub outcomes: Vec<SplitOutcome>,
}

impl SplitOutcome {
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "r2" => self.r2,
            "dic" => self.dic,
            "rmse" => self.rmse,
            "pwrmse" => self.pwrmse,
            _ => None,
        }
    }
}

impl MetricTable {
    pub fn variants(&self) -> Vec<Variant> {
        self.outcomes.iter().map(|o| o.variant).collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Median, minimum and maximum of a metric over the successful splits.
    pub fn summary(&self, variant: Variant, metric: &str) -> Option<MetricSummary> {
        let mut v: Vec<f64> =
            self.outcomes.iter().filter(|o| o.variant == variant).filter_map(|o| o.metric(metric)).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(MetricSummary { median: median(&v), min: v[0], max: v[v.len() - 1], n: v.len() })
    }

    pub fn failures(&self) -> usize {
        self.outcomes.iter().filter(|o| o.error.is_some()).count()
    }

    /// `variant,metric,median,min,max` over the successful splits.
    pub fn write_summary(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let res = (|| -> std::result::Result<(), csv::Error> {
            w.write_record(["variant", "metric", "median", "min", "max"])?;
            for v in self.variants() {
                for m in METRIC_NAMES {
                    match self.summary(v, m) {
                        Some(s) => w.write_record([
                            v.to_string(),
                            m.to_string(),
                            s.median.to_string(),
                            s.min.to_string(),
                            s.max.to_string(),
                        ])?,
                        None => w.write_record([v.to_string(), m.to_string(), String::new(), String::new(), String::new()])?,
                    }
                }
            }
            w.flush()?;
            Ok(())
        })();
        res.map_err(|e| DimaqError::io(Path::new("<metrics>"), std::io::Error::other(e)))
    }

    /// One row per variant, split and metric: `variant,split,metric,value,error`.
    pub fn write_long(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let res = (|| -> std::result::Result<(), csv::Error> {
            w.write_record(["variant", "split", "metric", "value", "error"])?;
            let mut rows: Vec<&SplitOutcome> = self.outcomes.iter().collect();
            rows.sort_by_key(|o| (o.variant, o.split));
            for o in rows {
                for m in METRIC_NAMES {
                    let value = o.metric(m).map(|x| x.to_string()).unwrap_or_default();
                    let error = o.error.clone().unwrap_or_default();
                    w.write_record([o.variant.to_string(), o.split.to_string(), m.to_string(), value, error])?;
                }
            }
            w.flush()?;
            Ok(())
        })();
        res.map_err(|e| DimaqError::io(Path::new("<metrics>"), std::io::Error::other(e)))
    }
}
