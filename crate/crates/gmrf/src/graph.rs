use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use crate::error::{GmrfError, Result};

/// Undirected graph on `n` nodes with sorted neighbor lists `∂i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyGraph {
    neighbors: Vec<Vec<usize>>,
}

impl AdjacencyGraph {
    /// Builds a graph from undirected edges; duplicates in either orientation
    /// collapse into one edge. Self-loops are rejected.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(GmrfError::InvalidGraph(format!("edge ({a}, {b}) references a node outside 0..{n}")));
            }
            if a == b {
                return Err(GmrfError::InvalidGraph(format!("self-loop at node {a}")));
            }
            sets[a].insert(b);
            sets[b].insert(a);
        }
        Ok(Self { neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect() })
    }

    /// Builds a graph from explicit neighbor lists, which must already be
    /// symmetric and free of self-loops.
    pub fn from_neighbor_lists(lists: Vec<Vec<usize>>) -> Result<Self> {
        let n = lists.len();
        let mut sets: Vec<BTreeSet<usize>> = Vec::with_capacity(n);
        for (i, list) in lists.iter().enumerate() {
            let mut set = BTreeSet::new();
            for &j in list {
                if j >= n {
                    return Err(GmrfError::InvalidGraph(format!("node {i} lists neighbor {j} outside 0..{n}")));
                }
                if j == i {
                    return Err(GmrfError::InvalidGraph(format!("self-loop at node {i}")));
                }
                set.insert(j);
            }
            sets.push(set);
        }
        for (i, set) in sets.iter().enumerate() {
            for &j in set {
                if !sets[j].contains(&i) {
                    return Err(GmrfError::InvalidGraph(format!(
                        "asymmetric adjacency: {j} is a neighbor of {i} but {i} is not a neighbor of {j}"
                    )));
                }
            }
        }
        Ok(Self { neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect() })
    }

    /// Reads a `country_a,country_b` edge list with a header row. `ids` fixes
    /// the node order; an id not in `ids` is an error.
    pub fn from_csv(path: &Path, ids: &[String]) -> Result<Self> {
        let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let edges = read_edge_list(path)?;
        let mut out = Vec::with_capacity(edges.len());
        for (line, a, b) in edges {
            let lookup = |s: &str| {
                index.get(s).copied().ok_or_else(|| GmrfError::Input {
                    path: path.display().to_string(),
                    message: format!("line {line}: unknown node id {s:?}"),
                })
            };
            out.push((lookup(&a)?, lookup(&b)?));
        }
        Self::from_edges(ids.len(), out).map_err(|e| GmrfError::Input {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (a, list) in self.neighbors.iter().enumerate() {
            out.extend(list.iter().filter(|&&b| b > a).map(|&b| (a, b)));
        }
        out
    }

    /// Connected components as sorted node lists, ordered by smallest member.
    /// Isolated nodes form their own component.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut label = vec![usize::MAX; n];
        let mut components = Vec::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            let id = components.len();
            let mut members = vec![start];
            label[start] = id;
            let mut head = 0;
            while head < members.len() {
                let v = members[head];
                head += 1;
                for &w in &self.neighbors[v] {
                    if label[w] == usize::MAX {
                        label[w] = id;
                        members.push(w);
                    }
                }
            }
            members.sort_unstable();
            components.push(members);
        }
        components
    }
}

/// Raw `(line, a, b)` rows of an edge-list CSV with header, deduplicated on
/// the unordered pair (first occurrence kept).
pub(crate) fn read_edge_list(path: &Path) -> Result<Vec<(usize, String, String)>> {
    let input_err = |message: String| GmrfError::Input { path: path.display().to_string(), message };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| input_err(e.to_string()))?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| input_err(format!("line {line}: {e}")))?;
        if record.len() != 2 {
            return Err(input_err(format!("line {line}: expected 2 fields, found {}", record.len())));
        }
        let a = record[0].to_string();
        let b = record[1].to_string();
        let key = if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
        if seen.insert(key) {
            out.push((line, a, b));
        }
    }
    Ok(out)
}
