//! Monitor and grid-cell records, 0.1° cell ids, and CSV input/output.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{DimaqError, Result};
use crate::hierarchy::{GeoHierarchy, Finding};

/// Grid resolution in degrees.
pub const CELL_SIZE_DEG: f64 = 0.1;

/// Lattice index of a coordinate at 0.1° resolution. A coordinate lying on a
/// cell boundary (within 1e-9 of one, in units of cells) belongs to the
/// cell below it.
pub fn lattice_index(deg: f64) -> i32 {
    let v = deg / CELL_SIZE_DEG;
    let k = v.round();
    if (v - k).abs() <= 1e-9 {
        k as i32 - 1
    } else {
        v.floor() as i32
    }
}

/// Packs the latitude and longitude lattice indices into one 64-bit key.
pub fn pack_cell_id(lat_index: i32, lon_index: i32) -> u64 {
    ((lat_index as u32 as u64) << 32) | (lon_index as u32 as u64)
}

pub fn unpack_cell_id(id: u64) -> (i32, i32) {
    ((id >> 32) as u32 as i32, id as u32 as i32)
}

pub fn cell_id(lat: f64, lon: f64) -> u64 {
    pack_cell_id(lattice_index(lat), lattice_index(lon))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pollutant {
    Pm25,
    Pm10,
}

/// One annual-mean measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub monitor_id: String,
    pub lat: f64,
    pub lon: f64,
    pub cell_id: u64,
    pub country_id: String,
    pub year: i32,
    pub pollutant: Pollutant,
    /// Concentration in μg·m⁻³.
    pub value: f64,
    /// X1: the monitor type was not specified.
    pub type_unspecified: bool,
    /// X2: the exact location is known.
    pub exact_location: bool,
    /// X3: the PM2.5 value was converted from PM10.
    pub converted: bool,
}

impl MonitorRecord {
    /// The three monitor-level indicators `(X1, X2, X3)` as numbers.
    pub fn indicators(&self) -> [f64; 3] {
        [self.type_unspecified as u8 as f64, self.exact_location as u8 as f64, self.converted as u8 as f64]
    }
}

/// Gridded covariates of one 0.1° cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCellRecord {
    pub cell_id: u64,
    pub country_id: String,
    /// X4: satellite-based PM2.5 (μg·m⁻³).
    pub x4_sat: f64,
    /// X5: chemical-transport-model PM2.5 (μg·m⁻³).
    pub x5_tm5: f64,
    /// X6: mineral dust (μg·m⁻³).
    pub x6_dust: f64,
    /// X7: sulphate, nitrate, ammonium and organic carbon (μg·m⁻³).
    pub x7_snaoc: f64,
    /// X8: population (persons).
    pub x8_pop: f64,
    /// X9: elevation difference × land-use (m·km).
    pub x9_edxdu: f64,
}

/// On-disk layout of a monitor row; flags are 0/1.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct MonitorRow {
    monitor_id: String,
    lat: f64,
    lon: f64,
    country_id: String,
    year: i32,
    pollutant: Pollutant,
    value: f64,
    type_unspecified: u8,
    exact_location: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadOptions {
    /// Inclusive range of accepted measurement years.
    pub year_range: (i32, i32),
    /// Regions allowed to contain a single country.
    pub region_whitelist: Vec<String>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { year_range: (2006, 2015), region_whitelist: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputPaths {
    pub monitors: PathBuf,
    pub cells: PathBuf,
    pub hierarchy: PathBuf,
    pub adjacency: PathBuf,
}

impl InputPaths {
    /// The four standard file names inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            monitors: dir.join("monitors.csv"),
            cells: dir.join("cells.csv"),
            hierarchy: dir.join("hierarchy.csv"),
            adjacency: dir.join("adjacency.csv"),
        }
    }

    pub fn all(&self) -> [&Path; 4] {
        [&self.monitors, &self.cells, &self.hierarchy, &self.adjacency]
    }
}

/// Reads a headed CSV file into rows, reporting the line and field of the
/// first malformed row.
pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| DimaqError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers().map_err(|e| csv_error(path, &e, None))?.clone();
    let mut out = Vec::new();
    for record in reader.deserialize::<T>() {
        out.push(record.map_err(|e| csv_error(path, &e, Some(&headers)))?);
    }
    Ok(out)
}

fn csv_error(path: &Path, e: &csv::Error, headers: Option<&csv::StringRecord>) -> DimaqError {
    let line = e.position().map_or(0, |p| p.line());
    let (field, message) = match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => {
            let field = err
                .field()
                .and_then(|f| headers.and_then(|h| h.get(f as usize)))
                .map_or_else(|| "row".to_string(), str::to_string);
            (field, err.kind().to_string())
        }
        _ => ("row".to_string(), e.to_string()),
    };
    DimaqError::Input { path: path.display().to_string(), line, field, message }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_write_error(path, e))?;
    for row in rows {
        writer.serialize(row).map_err(|e| csv_write_error(path, e))?;
    }
    writer.flush().map_err(|e| DimaqError::io(path, e))
}

fn csv_write_error(path: &Path, e: csv::Error) -> DimaqError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DimaqError::io(path, io),
        other => DimaqError::Input { path: path.display().to_string(), line: 0, field: "row".into(), message: format!("{other:?}") },
    }
}

/// Reads `monitors.csv`, assigning cell ids from the coordinates.
pub fn read_monitors(path: &Path) -> Result<Vec<MonitorRecord>> {
    let rows: Vec<MonitorRow> = read_csv(path)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let flag = |v: u8, field: &str| -> Result<bool> {
                match v {
                    0 => Ok(false),
                    1 => Ok(true),
                    _ => Err(DimaqError::Input {
                        path: path.display().to_string(),
                        line: i as u64 + 2,
                        field: field.into(),
                        message: format!("expected 0 or 1, found {v}"),
                    }),
                }
            };
            Ok(MonitorRecord {
                cell_id: cell_id(r.lat, r.lon),
                type_unspecified: flag(r.type_unspecified, "type_unspecified")?,
                exact_location: flag(r.exact_location, "exact_location")?,
                monitor_id: r.monitor_id,
                lat: r.lat,
                lon: r.lon,
                country_id: r.country_id,
                year: r.year,
                pollutant: r.pollutant,
                value: r.value,
                converted: false,
            })
        })
        .collect()
}

pub fn write_monitors(path: &Path, monitors: &[MonitorRecord]) -> Result<()> {
    let rows: Vec<MonitorRow> = monitors
        .iter()
        .map(|m| MonitorRow {
            monitor_id: m.monitor_id.clone(),
            lat: m.lat,
            lon: m.lon,
            country_id: m.country_id.clone(),
            year: m.year,
            pollutant: m.pollutant,
            value: m.value,
            type_unspecified: m.type_unspecified as u8,
            exact_location: m.exact_location as u8,
        })
        .collect();
    write_csv(path, &rows)
}

/// Row-level findings for monitors: value, year and coordinate ranges.
pub fn monitor_findings(monitors: &[MonitorRecord], year_range: (i32, i32), file: &str) -> Vec<Finding> {
    let mut out = Vec::new();
    for (i, m) in monitors.iter().enumerate() {
        let mut push = |message: String| out.push(Finding { file: file.into(), line: Some(i as u64 + 2), message });
        if !(m.value.is_finite() && m.value > 0.0) {
            push(format!("value: must be positive, found {}", m.value));
        }
        if m.year < year_range.0 || m.year > year_range.1 {
            push(format!("year: {} outside {}..={}", m.year, year_range.0, year_range.1));
        }
        if !(-90.0..=90.0).contains(&m.lat) || !(-180.0..=180.0).contains(&m.lon) {
            push(format!("lat/lon: ({}, {}) is not a coordinate", m.lat, m.lon));
        }
    }
    out
}

/// Row-level findings for cells: nonnegative population and X4–X7,
/// finite covariates, unique ids.
pub fn cell_findings(cells: &[GridCellRecord], file: &str) -> Vec<Finding> {
    let mut out = Vec::new();
    let mut seen: HashMap<u64, usize> = HashMap::new();
    for (i, c) in cells.iter().enumerate() {
        let mut push = |message: String| out.push(Finding { file: file.into(), line: Some(i as u64 + 2), message });
        for (name, v) in
            [("x4_sat", c.x4_sat), ("x5_tm5", c.x5_tm5), ("x6_dust", c.x6_dust), ("x7_snaoc", c.x7_snaoc), ("x8_pop", c.x8_pop)]
        {
            if !(v.is_finite() && v >= 0.0) {
                push(format!("{name}: must be finite and nonnegative, found {v}"));
            }
        }
        if !c.x9_edxdu.is_finite() {
            push(format!("x9_edxdu: must be finite, found {}", c.x9_edxdu));
        }
        if let Some(first) = seen.insert(c.cell_id, i) {
            push(format!("cell_id: {} already listed on line {}", c.cell_id, first + 2));
        }
    }
    out
}

/// Hierarchy, monitors and cells, cross-checked. Cells are sorted by id and
/// monitors by `(monitor_id, year, pollutant)`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub hierarchy: GeoHierarchy,
    pub monitors: Vec<MonitorRecord>,
    pub cells: Vec<GridCellRecord>,
    cell_lookup: HashMap<u64, usize>,
}

impl Dataset {
    /// Fails when a monitor's country or cell cannot be resolved, listing
    /// every offender. Cells in countries outside the hierarchy are kept (and
    /// logged); prediction handles them with a fallback.
    pub fn new(hierarchy: GeoHierarchy, mut monitors: Vec<MonitorRecord>, mut cells: Vec<GridCellRecord>) -> Result<Self> {
        cells.sort_by_key(|c| c.cell_id);
        if let Some(w) = cells.windows(2).find(|w| w[0].cell_id == w[1].cell_id) {
            return Err(DimaqError::Config(format!("duplicate cell id {}", w[0].cell_id)));
        }
        monitors.sort_by(|a, b| (&a.monitor_id, a.year, a.pollutant).cmp(&(&b.monitor_id, b.year, b.pollutant)));
        let cell_lookup: HashMap<u64, usize> = cells.iter().enumerate().map(|(i, c)| (c.cell_id, i)).collect();

        let mut unknown_country: Vec<String> = monitors
            .iter()
            .filter(|m| hierarchy.country_index(&m.country_id).is_none())
            .map(|m| format!("{} (country {})", m.monitor_id, m.country_id))
            .collect();
        unknown_country.dedup();
        if !unknown_country.is_empty() {
            return Err(DimaqError::Unresolved { kind: "monitor countries".into(), ids: unknown_country });
        }
        let mut unknown_cell: Vec<String> = monitors
            .iter()
            .filter(|m| !cell_lookup.contains_key(&m.cell_id))
            .map(|m| format!("{} at ({}, {})", m.monitor_id, m.lat, m.lon))
            .collect();
        unknown_cell.dedup();
        if !unknown_cell.is_empty() {
            return Err(DimaqError::Unresolved { kind: "monitor cells".into(), ids: unknown_cell });
        }
        let orphan_cells = cells.iter().filter(|c| hierarchy.country_index(&c.country_id).is_none()).count();
        if orphan_cells > 0 {
            log::warn!("{orphan_cells} cells belong to countries outside the hierarchy; they will use the global fallback");
        }
        Ok(Self { hierarchy, monitors, cells, cell_lookup })
    }

    pub fn load(paths: &InputPaths, options: &LoadOptions) -> Result<Self> {
        let hierarchy = GeoHierarchy::load(&paths.hierarchy, &paths.adjacency, &options.region_whitelist)?;
        let monitors = read_monitors(&paths.monitors)?;
        let findings = monitor_findings(&monitors, options.year_range, &paths.monitors.display().to_string());
        if let Some(f) = findings.first() {
            return Err(DimaqError::Input {
                path: f.file.clone(),
                line: f.line.unwrap_or(0),
                field: f.message.split(':').next().unwrap_or("row").to_string(),
                message: f.message.clone(),
            });
        }
        let cells: Vec<GridCellRecord> = read_csv(&paths.cells)?;
        let findings = cell_findings(&cells, &paths.cells.display().to_string());
        if let Some(f) = findings.first() {
            return Err(DimaqError::Input {
                path: f.file.clone(),
                line: f.line.unwrap_or(0),
                field: f.message.split(':').next().unwrap_or("row").to_string(),
                message: f.message.clone(),
            });
        }
        Self::new(hierarchy, monitors, cells)
    }

    pub fn cell(&self, id: u64) -> Option<&GridCellRecord> {
        self.cell_lookup.get(&id).map(|&i| &self.cells[i])
    }

    /// The same geography and cells with a different monitor set.
    pub fn with_monitors(&self, monitors: Vec<MonitorRecord>) -> Result<Self> {
        Self::new(self.hierarchy.clone(), monitors, self.cells.clone())
    }

    /// Population of a monitor's cell.
    pub fn population_of(&self, monitor: &MonitorRecord) -> f64 {
        self.cell(monitor.cell_id).map_or(0.0, |c| c.x8_pop)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let paths = InputPaths::in_dir(dir);
        write_monitors(&paths.monitors, &self.monitors)?;
        write_csv(&paths.cells, &self.cells)?;
        write_csv(&paths.hierarchy, &self.hierarchy.rows())?;
        write_csv(&paths.adjacency, &self.hierarchy.adjacency_rows())
    }
}

fn error_finding(e: DimaqError, file: &Path) -> Finding {
    match e {
        DimaqError::Input { path, line, field, message } => {
            Finding { file: path, line: (line > 0).then_some(line), message: format!("{field}: {message}") }
        }
        other => Finding { file: file.display().to_string(), line: None, message: other.to_string() },
    }
}

/// Checks every input file and their cross-references, collecting all
/// findings instead of stopping at the first. An empty result means
/// [`Dataset::load`] will accept the inputs.
pub fn validate_inputs(paths: &InputPaths, options: &LoadOptions) -> Vec<Finding> {
    use crate::hierarchy::{adjacency_findings, hierarchy_findings, AdjacencyRow, HierarchyRow};
    let mut out = Vec::new();
    let rows: Option<Vec<HierarchyRow>> = read_csv(&paths.hierarchy).map_err(|e| out.push(error_finding(e, &paths.hierarchy))).ok();
    let edges: Option<Vec<AdjacencyRow>> = read_csv(&paths.adjacency).map_err(|e| out.push(error_finding(e, &paths.adjacency))).ok();
    let monitors = read_monitors(&paths.monitors).map_err(|e| out.push(error_finding(e, &paths.monitors))).ok();
    let cells: Option<Vec<GridCellRecord>> = read_csv(&paths.cells).map_err(|e| out.push(error_finding(e, &paths.cells))).ok();

    let countries: Option<std::collections::BTreeSet<String>> =
        rows.as_ref().map(|r| r.iter().map(|r| r.country_id.clone()).collect());
    if let Some(rows) = &rows {
        out.extend(hierarchy_findings(rows, &options.region_whitelist));
    }
    if let (Some(edges), Some(ids)) = (&edges, &countries) {
        out.extend(adjacency_findings(edges, ids));
    }
    if let Some(cells) = &cells {
        out.extend(cell_findings(cells, &paths.cells.display().to_string()));
    }
    if let Some(monitors) = &monitors {
        let file = paths.monitors.display().to_string();
        out.extend(monitor_findings(monitors, options.year_range, &file));
        let cell_ids: Option<std::collections::HashSet<u64>> = cells.as_ref().map(|c| c.iter().map(|c| c.cell_id).collect());
        for (i, m) in monitors.iter().enumerate() {
            let line = Some(i as u64 + 2);
            if countries.as_ref().is_some_and(|ids| !ids.contains(&m.country_id)) {
                out.push(Finding { file: file.clone(), line, message: format!("country_id: {:?} is not in the hierarchy", m.country_id) });
            }
            if cell_ids.as_ref().is_some_and(|ids| !ids.contains(&m.cell_id)) {
                out.push(Finding {
                    file: file.clone(),
                    line,
                    message: format!("lat/lon: ({}, {}) falls in no listed grid cell", m.lat, m.lon),
                });
            }
        }
    }
    out
}
