//! Synthetic worlds drawn from the hierarchical model, for recovery and
//! cross-validation experiments.
//!
//! Everything is drawn from one ChaCha stream seeded by the caller, in a
//! fixed order, so a seed reproduces the world byte for byte.

use std::collections::BTreeMap;
use std::path::Path;

use gmrf::AdjacencyGraph;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::distributions::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{cell_id, Dataset, GridCellRecord, MonitorRecord, Pollutant};
use crate::error::{DimaqError, Result};
use crate::hierarchy::{AdjacencyRow, GeoHierarchy, HierarchyRow};
use crate::model::{raw_fixed_effects, Covariate, ModelSpec, Standardization, Variant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruthConfig {
    /// The variant whose terms generate the responses.
    pub variant: Variant,
    /// Fixed effects on the standardized covariate scale, by term name
    /// (`intercept`, `x1`, `x4`, `x1:x4`, …); absent terms are zero.
    pub fixed: BTreeMap<String, f64>,
    /// Standard deviations of the super-region, region and country
    /// deviations of the intercept.
    pub sd_super_region: f64,
    pub sd_region: f64,
    pub sd_country: f64,
    /// Nested slopes use the intercept standard deviations times this
    /// factor.
    pub slope_sd_factor: f64,
    pub sd_grid_cell: f64,
    pub sd_noise: f64,
    /// `1/sqrt(τ)` of the ICAR population slope.
    pub sd_icar: f64,
    /// Range of the per-region PM2.5/PM10 ratio.
    pub ratio_range: (f64, f64),
}

impl Default for TruthConfig {
    fn default() -> Self {
        let fixed = [
            ("intercept", 3.2),
            ("x1", 0.10),
            ("x2", -0.10),
            ("x3", 0.15),
            ("x4", 0.45),
            ("x8", 0.10),
            ("x1:x4", 0.05),
            ("x2:x4", -0.05),
            ("x3:x4", 0.08),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            variant: Variant::Ii,
            fixed,
            sd_super_region: 0.3,
            sd_region: 0.2,
            sd_country: 0.2,
            slope_sd_factor: 0.5,
            sd_grid_cell: 0.15,
            sd_noise: 0.25,
            sd_icar: 0.15,
            ratio_range: (0.45, 0.7),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub super_regions: usize,
    pub regions_per_super_region: usize,
    pub countries_per_region: usize,
    /// Total number of grid cells, spread evenly over countries.
    pub cells: usize,
    /// Number of monitored station-years (before PM10 conversion).
    pub monitors: usize,
    /// Share of stations reporting only PM10.
    pub pm10_only_fraction: f64,
    /// Share of stations reporting both pollutants.
    pub colocated_fraction: f64,
    pub type_unspecified_rate: f64,
    pub exact_location_rate: f64,
    pub years: (i32, i32),
    /// Detach the last country from the adjacency graph.
    pub island: bool,
    pub truth: TruthConfig,
}

impl Default for WorldConfig {
    /// The reference world: 4 super-regions, 8 regions, 24 countries,
    /// 2,000 cells and 300 monitors.
    fn default() -> Self {
        Self {
            super_regions: 4,
            regions_per_super_region: 2,
            countries_per_region: 3,
            cells: 2000,
            monitors: 300,
            pm10_only_fraction: 0.1,
            colocated_fraction: 0.15,
            type_unspecified_rate: 0.2,
            exact_location_rate: 0.8,
            years: (2010, 2015),
            island: true,
            truth: TruthConfig::default(),
        }
    }
}

impl WorldConfig {
    pub fn countries(&self) -> usize {
        self.super_regions * self.regions_per_super_region * self.countries_per_region
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DimaqError::Config(m));
        if self.super_regions == 0 || self.regions_per_super_region == 0 || self.countries_per_region == 0 {
            return bad("hierarchy counts must be positive".into());
        }
        if self.countries_per_region < 2 {
            return bad("regions need at least two countries".into());
        }
        if self.cells < self.countries() {
            return bad(format!("{} cells cannot cover {} countries", self.cells, self.countries()));
        }
        if self.monitors == 0 {
            return bad("at least one monitor is required".into());
        }
        let frac_ok = |f: f64| (0.0..=1.0).contains(&f);
        if !frac_ok(self.pm10_only_fraction)
            || !frac_ok(self.colocated_fraction)
            || self.pm10_only_fraction + self.colocated_fraction > 1.0
            || !frac_ok(self.type_unspecified_rate)
            || !frac_ok(self.exact_location_rate)
        {
            return bad("fractions and rates must lie in [0, 1] and PM10 shares may not exceed 1 together".into());
        }
        if self.years.0 > self.years.1 {
            return bad("empty year range".into());
        }
        let t = &self.truth;
        for (name, sd) in [
            ("sd_super_region", t.sd_super_region),
            ("sd_region", t.sd_region),
            ("sd_country", t.sd_country),
            ("slope_sd_factor", t.slope_sd_factor),
            ("sd_grid_cell", t.sd_grid_cell),
            ("sd_noise", t.sd_noise),
            ("sd_icar", t.sd_icar),
        ] {
            if !(sd >= 0.0 && sd.is_finite()) {
                return bad(format!("{name} must be finite and nonnegative"));
            }
        }
        if !(t.ratio_range.0 > 0.0 && t.ratio_range.0 <= t.ratio_range.1 && t.ratio_range.1 <= 1.0) {
            return bad("ratio_range must satisfy 0 < lo ≤ hi ≤ 1".into());
        }
        let names: Vec<String> = ModelSpec::for_variant(t.variant).fixed_terms().iter().map(|t| t.name()).collect();
        if let Some(k) = t.fixed.keys().find(|k| !names.contains(k)) {
            return bad(format!("truth term {k:?} is not a fixed effect of variant {}", t.variant));
        }
        Ok(())
    }
}

/// Deviations of one nested-tree effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDeviations {
    pub super_region: Vec<f64>,
    pub region: Vec<f64>,
    pub country: Vec<f64>,
    /// Sum along each country's path.
    pub composed: Vec<f64>,
}

/// Everything that generated a world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub seed: u64,
    pub config: WorldConfig,
    /// Standardization over all cells that defines the truth's scale.
    pub standardization: Standardization,
    pub fixed_standardized: BTreeMap<String, f64>,
    pub fixed_raw: BTreeMap<String, f64>,
    pub intercept: Option<TreeDeviations>,
    pub slopes: BTreeMap<String, TreeDeviations>,
    pub icar_population: Option<Vec<f64>>,
    pub region_ratio: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SimulatedWorld {
    pub data: Dataset,
    pub truth: Truth,
}

impl SimulatedWorld {
    /// Writes the four input files and `truth.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| DimaqError::io(dir, e))?;
        self.data.write(dir)?;
        let path = dir.join("truth.json");
        let text = serde_json::to_string_pretty(&self.truth)?;
        std::fs::write(&path, text + "\n").map_err(|e| DimaqError::io(&path, e))
    }
}

fn normal(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z * sd
}

fn draw_tree(
    rng: &mut ChaCha8Rng,
    t: &TruthConfig,
    scale: f64,
    n_sr: usize,
    n_r: usize,
    country_region: &[usize],
    region_sr: &[usize],
) -> TreeDeviations {
    let super_region: Vec<f64> = (0..n_sr).map(|_| normal(rng, scale * t.sd_super_region)).collect();
    let region: Vec<f64> = (0..n_r).map(|_| normal(rng, scale * t.sd_region)).collect();
    let country: Vec<f64> = country_region.iter().map(|_| normal(rng, scale * t.sd_country)).collect();
    let composed = country_region
        .iter()
        .enumerate()
        .map(|(c, &r)| super_region[region_sr[r]] + region[r] + country[c])
        .collect();
    TreeDeviations { super_region, region, country, composed }
}

/// Draw from the intrinsic CAR prior with precision `τ(D − A)`, centered
/// on every connected component.
fn draw_icar(rng: &mut ChaCha8Rng, graph: &AdjacencyGraph, sd: f64) -> Vec<f64> {
    let n = graph.len();
    let mut out = vec![0.0; n];
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    if sd == 0.0 {
        return out;
    }
    for comp in graph.connected_components() {
        let m = comp.len();
        if m < 2 {
            continue;
        }
        let local: BTreeMap<usize, usize> = comp.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut lap = DMatrix::<f64>::zeros(m, m);
        for (i, &v) in comp.iter().enumerate() {
            lap[(i, i)] = graph.degree(v) as f64;
            for w in graph.neighbors(v) {
                lap[(i, local[w])] = -1.0;
            }
        }
        let eig = SymmetricEigen::new(lap);
        for k in 0..m {
            let lambda = eig.eigenvalues[k];
            if lambda > 1e-9 {
                let coef = z[comp[k]] * sd / lambda.sqrt();
                for i in 0..m {
                    out[comp[i]] += coef * eig.eigenvectors[(i, k)];
                }
            }
        }
    }
    out
}

/// Draws a world from `config` with `seed`.
pub fn simulate_world(config: &WorldConfig, seed: u64) -> Result<SimulatedWorld> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = &config.truth;
    let n_sr = config.super_regions;
    let n_r = n_sr * config.regions_per_super_region;
    let n_c = config.countries();

    // Geography: super-region s holds regions s·R.., region r holds
    // countries r·C..; countries sit on a lattice, row-major.
    let region_sr: Vec<usize> = (0..n_r).map(|r| r / config.regions_per_super_region).collect();
    let country_region: Vec<usize> = (0..n_c).map(|c| c / config.countries_per_region).collect();
    let country_id = |c: usize| format!("C{c:03}");
    let rows: Vec<HierarchyRow> = (0..n_c)
        .map(|c| {
            let r = country_region[c];
            let s = region_sr[r];
            HierarchyRow {
                country_id: country_id(c),
                country_name: format!("Country {c}"),
                region_id: format!("R{r:02}"),
                region_name: format!("Region {r}"),
                super_region_id: format!("S{s:02}"),
                super_region_name: format!("Super-region {s}"),
            }
        })
        .collect();
    let width = (n_c as f64).sqrt().ceil() as usize;
    let mut edges = Vec::new();
    for c in 0..n_c {
        let isolated = |k: usize| config.island && n_c > 2 && k == n_c - 1;
        if isolated(c) {
            continue;
        }
        let col = c % width;
        if col + 1 < width && c + 1 < n_c && !isolated(c + 1) {
            edges.push(AdjacencyRow { country_a: country_id(c), country_b: country_id(c + 1) });
        }
        if c + width < n_c && !isolated(c + width) {
            edges.push(AdjacencyRow { country_a: country_id(c), country_b: country_id(c + width) });
        }
    }
    let hierarchy = GeoHierarchy::from_rows(&rows, &edges, &[])?;

    let spec = ModelSpec::for_variant(t.variant);
    let intercept = spec.random_intercept.then(|| draw_tree(&mut rng, t, 1.0, n_sr, n_r, &country_region, &region_sr));
    let slopes: BTreeMap<String, TreeDeviations> = spec
        .tree_slopes()
        .iter()
        .map(|c| (c.name().to_string(), draw_tree(&mut rng, t, t.slope_sd_factor, n_sr, n_r, &country_region, &region_sr)))
        .collect();
    let icar = spec.icar_covariate().map(|_| draw_icar(&mut rng, hierarchy.adjacency(), t.sd_icar));
    let region_ratio: Vec<f64> = (0..n_r).map(|_| rng.gen_range(t.ratio_range.0..=t.ratio_range.1)).collect();

    // Cells: each country is a block of 20 columns on the 0.1° lattice.
    const BLOCK_COLS: usize = 20;
    let base = config.cells / n_c;
    let remainder = config.cells % n_c;
    let max_rows = (base + 1).div_ceil(BLOCK_COLS);
    let lat_step = max_rows as f64 * 0.1 + 0.5;
    let lon_step = BLOCK_COLS as f64 * 0.1 + 0.5;
    let grid_rows = n_c.div_ceil(width);
    if -60.0 + grid_rows as f64 * lat_step > 80.0 || -170.0 + width as f64 * lon_step > 175.0 {
        return Err(DimaqError::Config("world does not fit on the globe; use fewer cells per country".into()));
    }
    let log_sat = Normal::new(25f64.ln(), 0.6).expect("valid");
    let mut cells = Vec::with_capacity(config.cells);
    let mut cell_centers = Vec::with_capacity(config.cells);
    let mut cell_country = Vec::with_capacity(config.cells);
    for c in 0..n_c {
        let n_cells = base + usize::from(c < remainder);
        let lat0 = -60.0 + (c / width) as f64 * lat_step;
        let lon0 = -170.0 + (c % width) as f64 * lon_step;
        let country_level = log_sat.sample(&mut rng);
        for k in 0..n_cells {
            let lat = lat0 + (k / BLOCK_COLS) as f64 * 0.1 + 0.05;
            let lon = lon0 + (k % BLOCK_COLS) as f64 * 0.1 + 0.05;
            let x4 = (country_level + normal(&mut rng, 0.35)).exp();
            let x5 = x4 * normal(&mut rng, 0.25).exp();
            let x6 = 2.0 * normal(&mut rng, 1.0).exp();
            let x7 = 0.4 * x4 * normal(&mut rng, 0.2).exp();
            let x8 = (5000f64.ln() + normal(&mut rng, 0.8)).exp();
            let x9 = normal(&mut rng, 100.0);
            cells.push(GridCellRecord {
                cell_id: cell_id(lat, lon),
                country_id: country_id(c),
                x4_sat: x4,
                x5_tm5: x5,
                x6_dust: x6,
                x7_snaoc: x7,
                x8_pop: x8,
                x9_edxdu: x9,
            });
            cell_centers.push((lat, lon));
            cell_country.push(c);
        }
    }
    let grid_effect: Vec<f64> = cells.iter().map(|_| normal(&mut rng, t.sd_grid_cell)).collect();

    let standardization = Standardization::fit(&Covariate::ALL, cells.iter());
    let terms = spec.fixed_terms();
    let coefs: Vec<f64> = terms.iter().map(|term| t.fixed.get(&term.name()).copied().unwrap_or(0.0)).collect();

    // Monitors, placed with probability proportional to population.
    let weights = WeightedIndex::new(cells.iter().map(|c| c.x8_pop)).map_err(|e| DimaqError::Config(e.to_string()))?;
    let mut monitors = Vec::with_capacity(config.monitors);
    for i in 0..config.monitors {
        let k = weights.sample(&mut rng);
        let cell = &cells[k];
        let c = cell_country[k];
        let (clat, clon) = cell_centers[k];
        let lat = clat + rng.gen_range(-0.04..0.04);
        let lon = clon + rng.gen_range(-0.04..0.04);
        let year = rng.gen_range(config.years.0..=config.years.1);
        let type_unspecified = rng.gen_bool(config.type_unspecified_rate);
        let exact_location = rng.gen_bool(config.exact_location_rate);
        let u: f64 = rng.gen();
        let pm10_only = u < config.pm10_only_fraction;
        let colocated = !pm10_only && u < config.pm10_only_fraction + config.colocated_fraction;
        let ind = [type_unspecified as u8 as f64, exact_location as u8 as f64, pm10_only as u8 as f64];
        let z = |cov: Covariate| standardization.z_cell(cov, cell);
        let mut eta: f64 = terms.iter().zip(&coefs).map(|(term, b)| b * term.value(ind, z)).sum();
        if let Some(dev) = &intercept {
            eta += dev.composed[c] + grid_effect[k];
        }
        for (name, dev) in &slopes {
            let cov = Covariate::ALL.iter().find(|cv| cv.name() == name).copied().expect("slope names are covariates");
            eta += dev.composed[c] * z(cov);
        }
        if let Some(field) = &icar {
            eta += field[c] * z(Covariate::X8);
        }
        let value = (eta + normal(&mut rng, t.sd_noise)).exp();
        let ratio = region_ratio[country_region[c]];
        let record = MonitorRecord {
            monitor_id: format!("M{i:04}"),
            lat,
            lon,
            cell_id: cell.cell_id,
            country_id: country_id(c),
            year,
            pollutant: if pm10_only { Pollutant::Pm10 } else { Pollutant::Pm25 },
            value: if pm10_only { value / ratio } else { value },
            type_unspecified,
            exact_location,
            converted: false,
        };
        if colocated {
            monitors.push(MonitorRecord { pollutant: Pollutant::Pm10, value: value / ratio, ..record.clone() });
        }
        monitors.push(record);
    }

    let truth = Truth {
        seed,
        config: config.clone(),
        fixed_raw: raw_fixed_effects(&terms, &standardization, &coefs),
        fixed_standardized: terms.iter().zip(&coefs).map(|(term, &b)| (term.name(), b)).collect(),
        standardization,
        intercept,
        slopes,
        icar_population: icar,
        region_ratio,
    };
    let data = Dataset::new(hierarchy, monitors, cells)?;
    Ok(SimulatedWorld { data, truth })
}
