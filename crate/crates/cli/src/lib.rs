//! Batch entry points: `simulate`, `validate`, `fit`, `predict`, `cv` and
//! `report`. Each run reads an optional JSON configuration, applies the
//! command-line flags on top, and writes a manifest beside its outputs.
//!
//! Exit codes: 0 on success, 1 for invalid inputs or configuration, 2 for
//! numerical failures.

pub mod config;
pub mod error;
pub mod manifest;

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use dimaq::evaluation::R2Scale;
use dimaq::Variant;
use inla::HyperPrior;

pub use config::RunConfig;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "dimaq", version, about = "Hierarchical calibration of gridded PM2.5 estimates against ground monitors")]
pub struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON configuration (or a previous run's manifest); flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: one per available core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Directory holding monitors.csv, cells.csv, hierarchy.csv and
    /// adjacency.csv.
    #[arg(long, short, global = true)]
    input: Option<PathBuf>,
    #[arg(long, global = true)]
    monitors: Option<PathBuf>,
    #[arg(long, global = true)]
    cells: Option<PathBuf>,
    #[arg(long, global = true)]
    hierarchy: Option<PathBuf>,
    #[arg(long, global = true)]
    adjacency: Option<PathBuf>,
    /// Regions allowed to contain a single country (repeatable).
    #[arg(long = "allow-single-country-region", global = true)]
    whitelist: Vec<String>,
    /// Accepted measurement years, e.g. `2006-2015`.
    #[arg(long, global = true, value_parser = parse_year_range)]
    years: Option<(i32, i32)>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic world with a known truth.
    Simulate(SimulateArgs),
    /// Check the input tables and report every problem found.
    Validate,
    /// Fit one variant and write the fit artifact.
    Fit(FitArgs),
    /// Predict every grid cell from a fit artifact.
    Predict(PredictArgs),
    /// Repeated stratified cross-validation of several variants.
    Cv(CvArgs),
    /// Human-readable summary of a fit artifact.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    super_regions: Option<usize>,
    #[arg(long)]
    regions_per_super_region: Option<usize>,
    #[arg(long)]
    countries_per_region: Option<usize>,
    #[arg(long = "n-cells")]
    n_cells: Option<usize>,
    #[arg(long = "n-monitors")]
    n_monitors: Option<usize>,
    /// Variant whose structure generates the truth.
    #[arg(long)]
    truth_variant: Option<Variant>,
}

/// Settings shared by every command that fits models.
#[derive(Debug, Args)]
struct FitTuning {
    /// Prior override `FAMILY=gamma:SHAPE,RATE` or `FAMILY=fixed:LOG_PRECISION`
    /// (repeatable).
    #[arg(long = "prior", value_parser = parse_prior)]
    priors: Vec<(String, HyperPrior)>,
    /// Separate variances per parent branch of the hierarchy.
    #[arg(long)]
    per_branch_variances: bool,
    /// Hyperparameter lattice spacing in standardized units.
    #[arg(long)]
    grid_step: Option<f64>,
    /// Log-density drop below the mode at which lattice points are excluded.
    #[arg(long)]
    grid_drop: Option<f64>,
    /// Gradient-norm tolerance of the mode search.
    #[arg(long)]
    newton_tol: Option<f64>,
    #[arg(long)]
    newton_max_iter: Option<usize>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    variant: Option<Variant>,
    #[command(flatten)]
    tuning: FitTuning,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Fit artifact (default: fit.json in the output directory).
    #[arg(long)]
    artifact: Option<PathBuf>,
    /// Cells per chunk; 0 predicts all cells at once.
    #[arg(long)]
    chunk_size: Option<usize>,
    /// Exceedance thresholds in µg/m³, comma-separated.
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    /// Include measurement noise in the predictive distribution.
    #[arg(long)]
    include_noise: bool,
    #[arg(long)]
    guideline: Option<f64>,
    #[arg(long)]
    bin_width: Option<f64>,
}

#[derive(Debug, Args)]
struct CvArgs {
    /// Variants to compare, comma-separated (e.g. `i,ii,iv`).
    #[arg(long, value_delimiter = ',')]
    variants: Option<Vec<Variant>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    splits: Option<usize>,
    #[arg(long)]
    validation_fraction: Option<f64>,
    /// Scale of the in-sample R²: `natural` or `log`.
    #[arg(long, value_parser = parse_r2_scale)]
    r2_scale: Option<R2Scale>,
    #[arg(long)]
    include_noise: bool,
    #[command(flatten)]
    tuning: FitTuning,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    artifact: Option<PathBuf>,
    /// Exposure summary from `predict` (default: exposure.json in the
    /// output directory, when present).
    #[arg(long)]
    exposure: Option<PathBuf>,
}

fn parse_year_range(s: &str) -> std::result::Result<(i32, i32), String> {
    let (a, b) = s.split_once('-').ok_or("expected FROM-TO")?;
    let a: i32 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: i32 = b.trim().parse().map_err(|e| format!("{e}"))?;
    if a > b {
        return Err(format!("empty year range {a}-{b}"));
    }
    Ok((a, b))
}

fn parse_prior(s: &str) -> std::result::Result<(String, HyperPrior), String> {
    let (family, spec) = s.split_once('=').ok_or("expected FAMILY=gamma:SHAPE,RATE or FAMILY=fixed:VALUE")?;
    let (kind, args) = spec.split_once(':').ok_or("expected gamma:SHAPE,RATE or fixed:VALUE")?;
    let nums: Vec<f64> = args.split(',').map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v}: {e}"))).collect::<std::result::Result<_, _>>()?;
    let prior = match (kind, nums.as_slice()) {
        ("gamma", &[shape, rate]) => HyperPrior::Gamma { shape, rate },
        ("fixed", &[log_precision]) => HyperPrior::Fixed { log_precision },
        _ => return Err(format!("cannot parse prior {spec:?}")),
    };
    Ok((family.trim().to_string(), prior))
}

fn parse_r2_scale(s: &str) -> std::result::Result<R2Scale, String> {
    match s {
        "natural" => Ok(R2Scale::Natural),
        "log" => Ok(R2Scale::Log),
        _ => Err(format!("unknown R² scale {s:?}; expected natural or log")),
    }
}

impl FitTuning {
    fn apply(self, c: &mut RunConfig) {
        c.fit.model.priors.extend(self.priors);
        if self.per_branch_variances {
            c.fit.model.per_branch_variances = true;
        }
        if let Some(v) = self.grid_step {
            c.fit.inla.grid.step = v;
        }
        if let Some(v) = self.grid_drop {
            c.fit.inla.grid.drop_threshold = v;
        }
        if let Some(v) = self.newton_tol {
            c.fit.inla.mode.grad_tol = v;
        }
        if let Some(v) = self.newton_max_iter {
            c.fit.inla.mode.max_iter = v;
        }
    }
}

/// Merges the configuration file and the flags into the effective
/// configuration.
fn effective_config(common: CommonArgs, command: &mut Command) -> Result<RunConfig> {
    let mut c = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($target:expr, $value:expr) => {
            if let Some(v) = $value {
                $target = Some(v);
            }
        };
    }
    set!(c.threads, common.threads);
    set!(c.output, common.out);
    set!(c.input.dir, common.input);
    set!(c.input.monitors, common.monitors);
    set!(c.input.cells, common.cells);
    set!(c.input.hierarchy, common.hierarchy);
    set!(c.input.adjacency, common.adjacency);
    c.load.region_whitelist.extend(common.whitelist);
    if let Some(y) = common.years {
        c.load.year_range = y;
    }
    match command {
        Command::Simulate(a) => {
            set!(c.seed, a.seed);
            let w = &mut c.world;
            w.super_regions = a.super_regions.unwrap_or(w.super_regions);
            w.regions_per_super_region = a.regions_per_super_region.unwrap_or(w.regions_per_super_region);
            w.countries_per_region = a.countries_per_region.unwrap_or(w.countries_per_region);
            w.cells = a.n_cells.unwrap_or(w.cells);
            w.monitors = a.n_monitors.unwrap_or(w.monitors);
            w.truth.variant = a.truth_variant.unwrap_or(w.truth.variant);
        }
        Command::Validate => {}
        Command::Fit(a) => {
            set!(c.variant, a.variant);
            std::mem::replace(&mut a.tuning, empty_tuning()).apply(&mut c);
        }
        Command::Predict(a) => {
            set!(c.artifact, a.artifact.take());
            if let Some(v) = a.chunk_size {
                c.prediction.chunk_size = v;
            }
            if let Some(t) = a.thresholds.take() {
                c.prediction.thresholds = t;
            }
            if a.include_noise {
                c.prediction.include_noise = true;
            }
            c.exposure.guideline = a.guideline.unwrap_or(c.exposure.guideline);
            c.exposure.bin_width = a.bin_width.unwrap_or(c.exposure.bin_width);
        }
        Command::Cv(a) => {
            if let Some(v) = a.variants.take() {
                c.variants = v;
            }
            set!(c.seed, a.seed);
            c.cv.n_splits = a.splits.unwrap_or(c.cv.n_splits);
            c.cv.validation_fraction = a.validation_fraction.unwrap_or(c.cv.validation_fraction);
            c.cv.r2_scale = a.r2_scale.unwrap_or(c.cv.r2_scale);
            if a.include_noise {
                c.cv.include_noise = true;
            }
            std::mem::replace(&mut a.tuning, empty_tuning()).apply(&mut c);
        }
        Command::Report(a) => {
            set!(c.artifact, a.artifact.take());
            set!(c.exposure_file, a.exposure.take());
        }
    }
    Ok(c)
}

fn empty_tuning() -> FitTuning {
    FitTuning { priors: Vec::new(), per_branch_variances: false, grid_step: None, grid_drop: None, newton_tol: None, newton_max_iter: None }
}

/// Runs the command line `argv` (including the program name) and returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            if !matches!(e, CliError::Findings(_)) {
                eprintln!("error: {e}");
            }
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let Cli { common, mut command } = cli;
    let config = effective_config(common, &mut command)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match command {
        Command::Simulate(_) => commands::simulate(&config),
        Command::Validate => commands::validate(&config),
        Command::Fit(_) => commands::fit(&config),
        Command::Predict(_) => commands::predict(&config),
        Command::Cv(_) => commands::cv(&config),
        Command::Report(_) => commands::report(&config),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn priors_parse() {
        assert_eq!(parse_prior("country=gamma:1,0.01").unwrap(), ("country".into(), HyperPrior::Gamma { shape: 1.0, rate: 0.01 }));
        assert_eq!(parse_prior("noise=fixed:2").unwrap(), ("noise".into(), HyperPrior::Fixed { log_precision: 2.0 }));
        assert!(parse_prior("noise=gamma:1").is_err());
        assert!(parse_prior("noise").is_err());
    }

    #[test]
    fn year_ranges_parse() {
        assert_eq!(parse_year_range("2006-2015").unwrap(), (2006, 2015));
        assert!(parse_year_range("2015-2006").is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"prediction": {"chunk_size": 9, "thresholds": [20]}, "threads": 3}"#).unwrap();
        let cli = Cli::try_parse_from(["dimaq", "predict", "--config", path.to_str().unwrap(), "--chunk-size", "4"]).unwrap();
        let Cli { common, mut command } = cli;
        let c = effective_config(common, &mut command).unwrap();
        assert_eq!(c.prediction.chunk_size, 4);
        assert_eq!(c.prediction.thresholds, vec![20.0]);
        assert_eq!(c.threads, Some(3));
    }
}
