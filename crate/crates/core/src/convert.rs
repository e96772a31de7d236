//! PM10 → PM2.5 conversion with locally derived ratios.
//!
//! A station reporting both pollutants in the same year yields a ratio
//! PM2.5/PM10. A country's factor is the population-weighted mean of its
//! station ratios; countries without colocated stations borrow the
//! unweighted mean of the factors of the other countries in their region.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::data::{Dataset, MonitorRecord, Pollutant};
use crate::error::Result;
use crate::hierarchy::GeoHierarchy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorSource {
    Country,
    RegionMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConversionFactor {
    pub factor: f64,
    pub source: FactorSource,
}

/// Station-level same-year ratios keyed by country id, as
/// `(ratio, population)` pairs.
fn station_ratios(records: &[MonitorRecord], populations: &HashMap<u64, f64>) -> BTreeMap<String, Vec<(f64, f64)>> {
    let mut by_station: BTreeMap<(&str, i32), (Option<&MonitorRecord>, Option<&MonitorRecord>)> = BTreeMap::new();
    for r in records {
        let slot = by_station.entry((&r.monitor_id, r.year)).or_default();
        match r.pollutant {
            Pollutant::Pm25 if slot.0.is_none() => slot.0 = Some(r),
            Pollutant::Pm10 if slot.1.is_none() => slot.1 = Some(r),
            _ => {}
        }
    }
    let mut out: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for (pm25, pm10) in by_station.values() {
        if let (Some(a), Some(b)) = (pm25, pm10) {
            let pop = populations.get(&a.cell_id).copied().unwrap_or(0.0);
            out.entry(a.country_id.clone()).or_default().push((a.value / b.value, pop));
        }
    }
    out
}

/// Conversion factor for every country of the hierarchy that has one,
/// directly or through its region.
pub fn conversion_factors(
    records: &[MonitorRecord],
    hierarchy: &GeoHierarchy,
    populations: &HashMap<u64, f64>,
) -> BTreeMap<String, ConversionFactor> {
    let ratios = station_ratios(records, populations);
    let mut direct: BTreeMap<String, f64> = BTreeMap::new();
    for (country, pairs) in &ratios {
        let total_pop: f64 = pairs.iter().map(|p| p.1).sum();
        let factor = if total_pop > 0.0 {
            pairs.iter().map(|(r, p)| r * p).sum::<f64>() / total_pop
        } else {
            log::warn!("country {country}: colocated stations have zero population; using the unweighted mean ratio");
            pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len() as f64
        };
        direct.insert(country.clone(), factor);
    }

    let members = hierarchy.region_members();
    let mut out = BTreeMap::new();
    for (c, country) in hierarchy.countries().iter().enumerate() {
        if let Some(&f) = direct.get(&country.id) {
            out.insert(country.id.clone(), ConversionFactor { factor: f, source: FactorSource::Country });
            continue;
        }
        let region_factors: Vec<f64> = members[hierarchy.region_of(c)]
            .iter()
            .filter_map(|&k| direct.get(&hierarchy.countries()[k].id).copied())
            .collect();
        if !region_factors.is_empty() {
            let f = region_factors.iter().sum::<f64>() / region_factors.len() as f64;
            out.insert(country.id.clone(), ConversionFactor { factor: f, source: FactorSource::RegionMean });
        }
    }
    out
}

/// Replaces every PM10-only station-year by a converted PM2.5 record with
/// the X3 flag set. PM10 records of stations that also report PM2.5 that
/// year only inform the ratios and are removed. Records without any
/// derivable factor are dropped with a logged reason. Applying the
/// conversion to its own output changes nothing.
pub fn convert_pm10(
    records: &[MonitorRecord],
    hierarchy: &GeoHierarchy,
    populations: &HashMap<u64, f64>,
) -> Vec<MonitorRecord> {
    let factors = conversion_factors(records, hierarchy, populations);
    let has_pm25: std::collections::HashSet<(&str, i32)> = records
        .iter()
        .filter(|r| r.pollutant == Pollutant::Pm25)
        .map(|r| (r.monitor_id.as_str(), r.year))
        .collect();
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        match r.pollutant {
            Pollutant::Pm25 => out.push(r.clone()),
            Pollutant::Pm10 if has_pm25.contains(&(r.monitor_id.as_str(), r.year)) => {}
            Pollutant::Pm10 => match factors.get(&r.country_id) {
                Some(f) => out.push(MonitorRecord {
                    value: r.value * f.factor,
                    pollutant: Pollutant::Pm25,
                    converted: true,
                    ..r.clone()
                }),
                None => log::warn!(
                    "dropping PM10 record {} ({}): no conversion factor for country {} or its region",
                    r.monitor_id,
                    r.year,
                    r.country_id
                ),
            },
        }
    }
    out
}

/// `data` with its monitors passed through [`convert_pm10`], using the
/// grid-cell populations as weights.
pub fn convert_dataset(data: &Dataset) -> Result<Dataset> {
    let populations: HashMap<u64, f64> = data.cells.iter().map(|c| (c.cell_id, c.x8_pop)).collect();
    data.with_monitors(convert_pm10(&data.monitors, &data.hierarchy, &populations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{AdjacencyRow, HierarchyRow};

    fn hierarchy() -> GeoHierarchy {
        let row = |c: &str, r: &str| HierarchyRow {
            country_id: c.into(),
            country_name: c.into(),
            region_id: r.into(),
            region_name: r.into(),
            super_region_id: "S".into(),
            super_region_name: "Super".into(),
        };
        let rows = vec![row("A", "R1"), row("B", "R1"), row("C", "R2"), row("D", "R2")];
        GeoHierarchy::from_rows(&rows, &Vec::<AdjacencyRow>::new(), &[]).unwrap()
    }

    fn rec(id: &str, country: &str, cell: u64, pollutant: Pollutant, value: f64) -> MonitorRecord {
        MonitorRecord {
            monitor_id: id.into(),
            lat: 0.0,
            lon: 0.0,
            cell_id: cell,
            country_id: country.into(),
            year: 2014,
            pollutant,
            value,
            type_unspecified: false,
            exact_location: true,
            converted: false,
        }
    }

    #[test]
    fn pm25_unchanged() {
        let records = vec![rec("m1", "A", 1, Pollutant::Pm25, 12.0)];
        let out = convert_pm10(&records, &hierarchy(), &HashMap::new());
        assert_eq!(out, records);
        assert!(!out[0].converted);
    }

    #[test]
    fn single_pair_ratio() {
        let records = vec![
            rec("m1", "A", 1, Pollutant::Pm25, 20.0),
            rec("m1", "A", 1, Pollutant::Pm10, 40.0),
            rec("m2", "A", 2, Pollutant::Pm10, 30.0),
        ];
        let pops = HashMap::from([(1, 100.0), (2, 50.0)]);
        let out = convert_pm10(&records, &hierarchy(), &pops);
        assert_eq!(out.len(), 2);
        assert_eq!(out[1].monitor_id, "m2");
        assert_eq!(out[1].value, 15.0);
        assert!(out[1].converted);
        assert_eq!(out[1].pollutant, Pollutant::Pm25);
    }

    #[test]
    fn population_weighted_factor() {
        let records = vec![
            rec("m1", "A", 1, Pollutant::Pm25, 4.0),
            rec("m1", "A", 1, Pollutant::Pm10, 10.0),
            rec("m2", "A", 2, Pollutant::Pm25, 6.0),
            rec("m2", "A", 2, Pollutant::Pm10, 10.0),
        ];
        let pops = HashMap::from([(1, 1000.0), (2, 3000.0)]);
        let f = conversion_factors(&records, &hierarchy(), &pops);
        assert!((f["A"].factor - 0.55).abs() < 1e-15);
        assert_eq!(f["B"].source, FactorSource::RegionMean);
        assert!(!f.contains_key("C"));
    }

    #[test]
    fn region_fallback_and_drop() {
        let records = vec![
            rec("m1", "A", 1, Pollutant::Pm25, 5.0),
            rec("m1", "A", 1, Pollutant::Pm10, 10.0),
            rec("m2", "B", 2, Pollutant::Pm10, 30.0),
            rec("m3", "C", 3, Pollutant::Pm10, 30.0),
        ];
        let out = convert_pm10(&records, &hierarchy(), &HashMap::from([(1, 1.0)]));
        assert_eq!(out.len(), 2);
        assert_eq!(out[1].monitor_id, "m2");
        assert_eq!(out[1].value, 15.0);
    }

    #[test]
    fn idempotent() {
        let records = vec![
            rec("m1", "A", 1, Pollutant::Pm25, 5.0),
            rec("m1", "A", 1, Pollutant::Pm10, 10.0),
            rec("m2", "B", 2, Pollutant::Pm10, 30.0),
        ];
        let h = hierarchy();
        let pops = HashMap::from([(1, 1.0)]);
        let once = convert_pm10(&records, &h, &pops);
        assert_eq!(convert_pm10(&once, &h, &pops), once);
    }
}
