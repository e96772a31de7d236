//! The country → region → super-region hierarchy and the country adjacency
//! graph, with the integrity rules the model relies on.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use gmrf::{AdjacencyGraph, TreeIndex};
use serde::{Deserialize, Serialize};

use crate::error::{DimaqError, Result};

/// One row of `hierarchy.csv`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyRow {
    pub country_id: String,
    pub country_name: String,
    pub region_id: String,
    pub region_name: String,
    pub super_region_id: String,
    pub super_region_name: String,
}

/// One row of `adjacency.csv`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjacencyRow {
    pub country_a: String,
    pub country_b: String,
}

/// A problem found while checking inputs; `line` is 1-based including the
/// header when the problem is tied to one row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub file: String,
    pub line: Option<u64>,
    pub message: String,
}

impl std::fmt::Display for Finding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{}: {}", self.file, l, self.message),
            None => write!(f, "{}: {}", self.file, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SuperRegion {
    pub id: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Region {
    pub id: String,
    pub name: String,
    pub super_region: usize,
    /// The region coincides with its super-region and shares its deviation.
    pub merged: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Country {
    pub id: String,
    pub name: String,
    pub region: usize,
}

/// Validated geography. Countries, regions and super-regions are each
/// sorted by id, and those positions are the indices used everywhere else.
#[derive(Debug, Clone)]
pub struct GeoHierarchy {
    super_regions: Vec<SuperRegion>,
    regions: Vec<Region>,
    countries: Vec<Country>,
    adjacency: AdjacencyGraph,
    country_lookup: HashMap<String, usize>,
}

const HIERARCHY_FILE: &str = "hierarchy.csv";
const ADJACENCY_FILE: &str = "adjacency.csv";

fn is_merged(row: &HierarchyRow) -> bool {
    row.region_id == row.super_region_id
        || row.region_name.trim().eq_ignore_ascii_case(row.super_region_name.trim())
}

/// Integrity findings for a hierarchy table; `whitelist` lists region ids
/// allowed to hold a single country.
pub fn hierarchy_findings(rows: &[HierarchyRow], whitelist: &[String]) -> Vec<Finding> {
    let mut out = Vec::new();
    let finding = |line: usize, message: String| Finding { file: HIERARCHY_FILE.into(), line: Some(line as u64 + 2), message };
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut region_parent: BTreeMap<&str, (&str, usize)> = BTreeMap::new();
    let mut region_count: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        for (field, value) in [
            ("country_id", &row.country_id),
            ("region_id", &row.region_id),
            ("super_region_id", &row.super_region_id),
        ] {
            if value.trim().is_empty() {
                out.push(finding(i, format!("{field} is empty")));
            }
        }
        if let Some(&first) = seen.get(row.country_id.as_str()) {
            out.push(finding(i, format!("country {:?} already listed on line {}", row.country_id, first + 2)));
            continue;
        }
        seen.insert(&row.country_id, i);
        match region_parent.get(row.region_id.as_str()) {
            Some(&(sr, first)) if sr != row.super_region_id => out.push(finding(
                i,
                format!(
                    "region {:?} is placed in super-region {:?} but line {} places it in {:?}",
                    row.region_id,
                    row.super_region_id,
                    first + 2,
                    sr
                ),
            )),
            Some(_) => {}
            None => {
                region_parent.insert(&row.region_id, (&row.super_region_id, i));
            }
        }
        *region_count.entry(&row.region_id).or_default() += 1;
    }
    for (region, count) in region_count {
        if count < 2 && !whitelist.iter().any(|w| w == region) {
            out.push(Finding {
                file: HIERARCHY_FILE.into(),
                line: None,
                message: format!(
                    "region {region:?} has {count} country; regions must contain at least two countries \
                     (whitelist it to allow this)"
                ),
            });
        }
    }
    out
}

/// Findings for an adjacency edge list against the known country ids.
///
/// A file that lists some pair in both orientations is taken to use the
/// directed convention, and then every pair must appear both ways.
pub fn adjacency_findings(rows: &[AdjacencyRow], country_ids: &BTreeSet<String>) -> Vec<Finding> {
    let mut out = Vec::new();
    let finding = |line: usize, message: String| Finding { file: ADJACENCY_FILE.into(), line: Some(line as u64 + 2), message };
    let mut directed: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        for id in [&row.country_a, &row.country_b] {
            if !country_ids.contains(id) {
                out.push(finding(i, format!("unknown country id {id:?}")));
            }
        }
        if row.country_a == row.country_b {
            out.push(finding(i, format!("self-adjacency of {:?}", row.country_a)));
            continue;
        }
        directed.entry((&row.country_a, &row.country_b)).or_insert(i);
    }
    let symmetric_convention = directed.keys().any(|&(a, b)| directed.contains_key(&(b, a)));
    if symmetric_convention {
        for (&(a, b), &line) in &directed {
            if !directed.contains_key(&(b, a)) {
                out.push(finding(line, format!("asymmetric adjacency: ({a}, {b}) is listed but ({b}, {a}) is not")));
            }
        }
    }
    out
}

impl GeoHierarchy {
    /// Builds the hierarchy, rejecting any integrity finding.
    pub fn from_rows(rows: &[HierarchyRow], edges: &[AdjacencyRow], whitelist: &[String]) -> Result<Self> {
        let mut findings = hierarchy_findings(rows, whitelist);
        let ids: BTreeSet<String> = rows.iter().map(|r| r.country_id.clone()).collect();
        findings.extend(adjacency_findings(edges, &ids));
        if !findings.is_empty() {
            let text: Vec<String> = findings.iter().map(ToString::to_string).collect();
            return Err(DimaqError::Hierarchy(text.join("; ")));
        }

        let mut sorted: Vec<&HierarchyRow> = rows.iter().collect();
        sorted.sort_by(|a, b| a.country_id.cmp(&b.country_id));
        let sr_ids: BTreeMap<&str, &str> =
            sorted.iter().map(|r| (r.super_region_id.as_str(), r.super_region_name.as_str())).collect();
        let super_regions: Vec<SuperRegion> =
            sr_ids.iter().map(|(id, name)| SuperRegion { id: id.to_string(), name: name.to_string() }).collect();
        let sr_index: HashMap<&str, usize> = sr_ids.keys().enumerate().map(|(i, id)| (*id, i)).collect();

        let region_rows: BTreeMap<&str, &HierarchyRow> = sorted.iter().map(|r| (r.region_id.as_str(), *r)).collect();
        let regions: Vec<Region> = region_rows
            .values()
            .map(|r| Region {
                id: r.region_id.clone(),
                name: r.region_name.clone(),
                super_region: sr_index[r.super_region_id.as_str()],
                merged: is_merged(r),
            })
            .collect();
        let region_index: HashMap<&str, usize> = region_rows.keys().enumerate().map(|(i, id)| (*id, i)).collect();

        let countries: Vec<Country> = sorted
            .iter()
            .map(|r| Country {
                id: r.country_id.clone(),
                name: r.country_name.clone(),
                region: region_index[r.region_id.as_str()],
            })
            .collect();
        let country_lookup: HashMap<String, usize> =
            countries.iter().enumerate().map(|(i, c)| (c.id.clone(), i)).collect();
        let edge_index: Vec<(usize, usize)> =
            edges.iter().map(|e| (country_lookup[&e.country_a], country_lookup[&e.country_b])).collect();
        let adjacency = AdjacencyGraph::from_edges(countries.len(), edge_index)?;
        Ok(Self { super_regions, regions, countries, adjacency, country_lookup })
    }

    pub fn load(hierarchy: &Path, adjacency: &Path, whitelist: &[String]) -> Result<Self> {
        let rows: Vec<HierarchyRow> = crate::data::read_csv(hierarchy)?;
        let edges: Vec<AdjacencyRow> = crate::data::read_csv(adjacency)?;
        Self::from_rows(&rows, &edges, whitelist)
    }

    pub fn super_regions(&self) -> &[SuperRegion] {
        &self.super_regions
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn countries(&self) -> &[Country] {
        &self.countries
    }

    pub fn adjacency(&self) -> &AdjacencyGraph {
        &self.adjacency
    }

    pub fn country_index(&self, id: &str) -> Option<usize> {
        self.country_lookup.get(id).copied()
    }

    pub fn region_of(&self, country: usize) -> usize {
        self.countries[country].region
    }

    pub fn super_region_of(&self, country: usize) -> usize {
        self.regions[self.countries[country].region].super_region
    }

    /// Countries of each region, by region index.
    pub fn region_members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.regions.len()];
        for (c, country) in self.countries.iter().enumerate() {
            out[country.region].push(c);
        }
        out
    }

    /// Index maps for nested-tree blocks over countries.
    pub fn tree_index(&self) -> TreeIndex {
        TreeIndex::with_merged(
            self.countries.iter().map(|c| c.region).collect(),
            self.regions.iter().map(|r| r.super_region).collect(),
            self.super_regions.len(),
            self.regions.iter().map(|r| r.merged).collect(),
        )
        .expect("indices are consistent by construction")
    }

    pub fn rows(&self) -> Vec<HierarchyRow> {
        self.countries
            .iter()
            .map(|c| {
                let r = &self.regions[c.region];
                let s = &self.super_regions[r.super_region];
                HierarchyRow {
                    country_id: c.id.clone(),
                    country_name: c.name.clone(),
                    region_id: r.id.clone(),
                    region_name: r.name.clone(),
                    super_region_id: s.id.clone(),
                    super_region_name: s.name.clone(),
                }
            })
            .collect()
    }

    pub fn adjacency_rows(&self) -> Vec<AdjacencyRow> {
        self.adjacency
            .edges()
            .into_iter()
            .map(|(a, b)| AdjacencyRow { country_a: self.countries[a].id.clone(), country_b: self.countries[b].id.clone() })
            .collect()
    }
}
