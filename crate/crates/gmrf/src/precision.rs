use std::sync::Arc;

use crate::error::{GmrfError, Result};

/// Structure of the upper triangle of a symmetric sparse matrix in
/// compressed-column form. Row indices within a column are strictly
/// increasing and never exceed the column index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsePattern {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
}

impl SparsePattern {
    /// Builds a pattern from arbitrary `(i, j)` coordinates; each pair is
    /// folded onto the upper triangle and duplicates are merged. Every
    /// diagonal position is always included.
    pub fn from_coordinates(n: usize, coords: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut cols: Vec<Vec<usize>> = (0..n).map(|j| vec![j]).collect();
        for (i, j) in coords {
            if i >= n || j >= n {
                return Err(GmrfError::InvalidMatrix(format!(
                    "coordinate ({i}, {j}) outside a {n}x{n} matrix"
                )));
            }
            let (r, c) = if i <= j { (i, j) } else { (j, i) };
            cols[c].push(r);
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for mut rows in cols {
            rows.sort_unstable();
            rows.dedup();
            row_idx.extend(rows);
            col_ptr.push(row_idx.len());
        }
        Ok(Self { n, col_ptr, row_idx })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored upper-triangular entries (diagonal included).
    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    /// Storage position of entry `(i, j)` (either triangle), if present.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        if c >= self.n {
            return None;
        }
        let lo = self.col_ptr[c];
        let hi = self.col_ptr[c + 1];
        self.row_idx[lo..hi].binary_search(&r).ok().map(|p| lo + p)
    }

    /// Union of two patterns of the same dimension.
    pub fn union(&self, other: &SparsePattern) -> Result<SparsePattern> {
        if self.n != other.n {
            return Err(GmrfError::DimensionMismatch { expected: self.n, found: other.n });
        }
        let coords = self.coordinates().chain(other.coordinates()).collect::<Vec<_>>();
        SparsePattern::from_coordinates(self.n, coords)
    }

    /// Upper-triangular coordinates in storage order.
    pub fn coordinates(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |c| {
            self.row_idx[self.col_ptr[c]..self.col_ptr[c + 1]].iter().map(move |&r| (r, c))
        })
    }
}

/// Symmetric sparse precision matrix; only the upper triangle is stored.
///
/// Values are in precision units (inverse variance of the underlying
/// quantity). The structure is reference counted so that many matrices over
/// one pattern, e.g. one per hyperparameter value, share it.
#[derive(Debug, Clone)]
pub struct SparsePrecision {
    pattern: Arc<SparsePattern>,
    values: Vec<f64>,
}

impl SparsePrecision {
    /// Builds a matrix from `(row, col, value)` triplets. Either triangle may
    /// be given; entries landing on the same upper-triangular coordinate are
    /// summed. Diagonal values must be nonnegative.
    pub fn from_triplets(n: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let triplets: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        let pattern = SparsePattern::from_coordinates(n, triplets.iter().map(|&(i, j, _)| (i, j)))?;
        let mut values = vec![0.0; pattern.nnz()];
        for (i, j, v) in triplets {
            if !v.is_finite() {
                return Err(GmrfError::InvalidMatrix(format!("non-finite value at ({i}, {j})")));
            }
            let p = pattern.position(i, j).expect("coordinate is in its own pattern");
            values[p] += v;
        }
        Self::from_parts(Arc::new(pattern), values)
    }

    pub fn from_parts(pattern: Arc<SparsePattern>, values: Vec<f64>) -> Result<Self> {
        if values.len() != pattern.nnz() {
            return Err(GmrfError::DimensionMismatch { expected: pattern.nnz(), found: values.len() });
        }
        for j in 0..pattern.n {
            let p = pattern.col_ptr[j + 1] - 1;
            debug_assert_eq!(pattern.row_idx[p], j);
            if values[p] < 0.0 || values[p].is_nan() {
                return Err(GmrfError::InvalidMatrix(format!(
                    "negative diagonal value {} at index {j}",
                    values[p]
                )));
            }
        }
        Ok(Self { pattern, values })
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::from_triplets(diag.len(), diag.iter().enumerate().map(|(i, &v)| (i, i, v)))
    }

    pub fn zeros(n: usize) -> Self {
        Self::diagonal(&vec![0.0; n]).expect("zero diagonal is valid")
    }

    /// Block-diagonal matrix from blocks in order.
    pub fn block_diag(blocks: &[&SparsePrecision]) -> Result<Self> {
        let n = blocks.iter().map(|b| b.dim()).sum();
        let mut triplets = Vec::with_capacity(blocks.iter().map(|b| b.nnz()).sum());
        let mut offset = 0;
        for b in blocks {
            triplets.extend(b.entries().map(|(i, j, v)| (i + offset, j + offset, v)));
            offset += b.dim();
        }
        Self::from_triplets(n, triplets)
    }

    pub fn dim(&self) -> usize {
        self.pattern.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn pattern(&self) -> &Arc<SparsePattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.position(i, j).map_or(0.0, |p| self.values[p])
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| self.values[self.pattern.col_ptr[j + 1] - 1]).collect()
    }

    /// Upper-triangular entries `(row, col, value)` with `row <= col`, sorted
    /// by column then row.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.pattern.coordinates().zip(self.values.iter()).map(|((r, c), &v)| (r, c, v))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut out = vec![vec![0.0; n]; n];
        for (r, c, v) in self.entries() {
            out[r][c] = v;
            out[c][r] = v;
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if x.len() != n {
            return Err(GmrfError::DimensionMismatch { expected: n, found: x.len() });
        }
        let mut y = vec![0.0; n];
        for (r, c, v) in self.entries() {
            y[r] += v * x[c];
            if r != c {
                y[c] += v * x[r];
            }
        }
        Ok(y)
    }

    /// `xᵀ Q x`.
    pub fn quad_form(&self, x: &[f64]) -> Result<f64> {
        let qx = self.mul_vec(x)?;
        Ok(qx.iter().zip(x).map(|(a, b)| a * b).sum())
    }

    /// `self + other` on the union pattern.
    pub fn add(&self, other: &SparsePrecision) -> Result<SparsePrecision> {
        if self.dim() != other.dim() {
            return Err(GmrfError::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Self::from_triplets(self.dim(), self.entries().chain(other.entries()))
    }

    pub fn scaled(&self, s: f64) -> SparsePrecision {
        SparsePrecision { pattern: Arc::clone(&self.pattern), values: self.values.iter().map(|v| v * s).collect() }
    }

    /// Re-expresses the matrix on a larger pattern that contains this one.
    pub fn embed_in(&self, pattern: &Arc<SparsePattern>) -> Result<SparsePrecision> {
        if pattern.dim() != self.dim() {
            return Err(GmrfError::DimensionMismatch { expected: pattern.dim(), found: self.dim() });
        }
        let mut values = vec![0.0; pattern.nnz()];
        for (r, c, v) in self.entries() {
            let p = pattern.position(r, c).ok_or_else(|| {
                GmrfError::InvalidMatrix(format!("entry ({r}, {c}) missing from target pattern"))
            })?;
            values[p] = v;
        }
        SparsePrecision::from_parts(Arc::clone(pattern), values)
    }
}
