use std::collections::BTreeSet;

use crate::precision::SparsePattern;

/// Fill-reducing ordering by greedy minimum degree on the explicit
/// elimination graph. Ties go to the smallest index, so the result is
/// deterministic.
///
/// Returns `perm` with `perm[k]` the original index placed at position `k`.
pub fn minimum_degree_ordering(pattern: &SparsePattern) -> Vec<usize> {
    let n = pattern.dim();
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (r, c) in pattern.coordinates() {
        if r != c {
            adj[r].insert(c);
            adj[c].insert(r);
        }
    }
    let mut eliminated = vec![false; n];
    let mut perm = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best = usize::MAX;
        let mut best_deg = usize::MAX;
        for (v, set) in adj.iter().enumerate() {
            if !eliminated[v] && set.len() < best_deg {
                best = v;
                best_deg = set.len();
            }
        }
        eliminated[best] = true;
        perm.push(best);
        let nbrs: Vec<usize> = std::mem::take(&mut adj[best]).into_iter().collect();
        for &a in &nbrs {
            adj[a].remove(&best);
        }
        for (x, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[x + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
    }
    perm
}
