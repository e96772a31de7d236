use std::sync::Arc;

use crate::error::{GmrfError, Result};
use crate::ordering::minimum_degree_ordering;
use crate::precision::{SparsePattern, SparsePrecision};

const NONE: usize = usize::MAX;

/// A pivot is rejected when it falls below this fraction of the matching
/// diagonal entry of the input matrix.
const PIVOT_TOLERANCE: f64 = 1e-14;

/// Ordering, elimination tree and factor pattern for one sparsity pattern.
///
/// Analysis depends only on the pattern, so one symbolic factorization serves
/// every matrix that shares it.
#[derive(Debug)]
pub struct SymbolicCholesky {
    pattern: Arc<SparsePattern>,
    perm: Vec<usize>,
    pinv: Vec<usize>,
    parent: Vec<usize>,
    // Upper triangle of P Q Pᵀ by column: row index and source position in Q.
    c_col_ptr: Vec<usize>,
    c_row: Vec<usize>,
    c_src: Vec<usize>,
    l_col_ptr: Vec<usize>,
    l_row: Vec<usize>,
    // Row patterns of L (strictly lower part), in elimination-reach order.
    row_ptr: Vec<usize>,
    row_list: Vec<usize>,
}

impl SymbolicCholesky {
    /// Analyzes `pattern` with a minimum-degree ordering.
    pub fn analyze(pattern: &Arc<SparsePattern>) -> Arc<Self> {
        let perm = minimum_degree_ordering(pattern);
        Self::with_ordering(pattern, perm).expect("minimum-degree ordering is a permutation")
    }

    /// Analyzes `pattern` under a caller-supplied permutation.
    pub fn with_ordering(pattern: &Arc<SparsePattern>, perm: Vec<usize>) -> Result<Arc<Self>> {
        let n = pattern.dim();
        if perm.len() != n {
            return Err(GmrfError::DimensionMismatch { expected: n, found: perm.len() });
        }
        let mut pinv = vec![NONE; n];
        for (k, &i) in perm.iter().enumerate() {
            if i >= n || pinv[i] != NONE {
                return Err(GmrfError::InvalidMatrix("ordering is not a permutation".into()));
            }
            pinv[i] = k;
        }

        // Permuted upper triangle.
        let mut cols: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (p, (r, c)) in pattern.coordinates().enumerate() {
            let (a, b) = (pinv[r], pinv[c]);
            let (row, col) = if a <= b { (a, b) } else { (b, a) };
            cols[col].push((row, p));
        }
        let mut c_col_ptr = Vec::with_capacity(n + 1);
        let mut c_row = Vec::with_capacity(pattern.nnz());
        let mut c_src = Vec::with_capacity(pattern.nnz());
        c_col_ptr.push(0);
        for mut col in cols {
            col.sort_unstable();
            for (row, src) in col {
                c_row.push(row);
                c_src.push(src);
            }
            c_col_ptr.push(c_row.len());
        }

        // Elimination tree.
        let mut parent = vec![NONE; n];
        let mut ancestor = vec![NONE; n];
        for k in 0..n {
            for &row in &c_row[c_col_ptr[k]..c_col_ptr[k + 1]] {
                let mut i = row;
                while i != NONE && i < k {
                    let next = ancestor[i];
                    ancestor[i] = k;
                    if next == NONE {
                        parent[i] = k;
                    }
                    i = next;
                }
            }
        }

        // Row patterns of L via elimination reach.
        let mut mark = vec![NONE; n];
        let mut stack = vec![0usize; n];
        let mut path = vec![0usize; n];
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut row_list = Vec::new();
        let mut col_count = vec![1usize; n];
        row_ptr.push(0);
        for k in 0..n {
            let mut top = n;
            mark[k] = k;
            for &row in &c_row[c_col_ptr[k]..c_col_ptr[k + 1]] {
                let mut i = row;
                if i > k {
                    continue;
                }
                let mut len = 0;
                while mark[i] != k {
                    path[len] = i;
                    len += 1;
                    mark[i] = k;
                    i = parent[i];
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    stack[top] = path[len];
                }
            }
            for &i in &stack[top..n] {
                col_count[i] += 1;
                row_list.push(i);
            }
            row_ptr.push(row_list.len());
        }

        let mut l_col_ptr = Vec::with_capacity(n + 1);
        l_col_ptr.push(0);
        for &c in &col_count {
            l_col_ptr.push(l_col_ptr.last().unwrap() + c);
        }
        let mut l_row = vec![0usize; *l_col_ptr.last().unwrap()];
        let mut next: Vec<usize> = l_col_ptr[..n].to_vec();
        for k in 0..n {
            for &i in &row_list[row_ptr[k]..row_ptr[k + 1]] {
                l_row[next[i]] = k;
                next[i] += 1;
            }
            l_row[next[k]] = k;
            next[k] += 1;
        }
        // Each column must hold its diagonal first; rows are appended in
        // increasing k and column i only receives rows k > i after its own
        // diagonal was placed at k == i.
        debug_assert!((0..n).all(|j| l_row[l_col_ptr[j]] == j));

        Ok(Arc::new(Self {
            pattern: Arc::clone(pattern),
            perm,
            pinv,
            parent,
            c_col_ptr,
            c_row,
            c_src,
            l_col_ptr,
            l_row,
            row_ptr,
            row_list,
        }))
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn elimination_tree(&self) -> &[usize] {
        &self.parent
    }

    /// Number of stored entries of `L` (diagonal included).
    pub fn factor_nnz(&self) -> usize {
        self.l_row.len()
    }

    pub fn pattern(&self) -> &Arc<SparsePattern> {
        &self.pattern
    }

    /// Storage position in `L` (and in [`SelectedInverse`]) of the entry
    /// coupling original indices `i` and `j`, if it lies on the factor
    /// pattern.
    pub fn factor_position(&self, i: usize, j: usize) -> Option<usize> {
        let (a, b) = (self.pinv[i], self.pinv[j]);
        let (row, col) = if a >= b { (a, b) } else { (b, a) };
        let lo = self.l_col_ptr[col];
        let hi = self.l_col_ptr[col + 1];
        self.l_row[lo..hi].binary_search(&row).ok().map(|p| lo + p)
    }

    /// Numeric factorization of a matrix with exactly the analyzed pattern.
    pub fn factor(self: &Arc<Self>, q: &SparsePrecision) -> Result<CholeskyFactor> {
        if !Arc::ptr_eq(q.pattern(), &self.pattern) && **q.pattern() != *self.pattern {
            return Err(GmrfError::InvalidMatrix("matrix pattern differs from the analyzed pattern".into()));
        }
        let n = self.dim();
        let qv = q.values();
        let mut lx = vec![0.0; self.l_row.len()];
        let mut next: Vec<usize> = self.l_col_ptr[..n].to_vec();
        let mut x = vec![0.0; n];
        for k in 0..n {
            let mut ckk = 0.0;
            for p in self.c_col_ptr[k]..self.c_col_ptr[k + 1] {
                let row = self.c_row[p];
                x[row] = qv[self.c_src[p]];
                if row == k {
                    ckk = x[row];
                }
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &self.row_list[self.row_ptr[k]..self.row_ptr[k + 1]] {
                let lki = x[i] / lx[self.l_col_ptr[i]];
                x[i] = 0.0;
                for p in self.l_col_ptr[i] + 1..next[i] {
                    x[self.l_row[p]] -= lx[p] * lki;
                }
                d -= lki * lki;
                lx[next[i]] = lki;
                next[i] += 1;
            }
            if !(d > PIVOT_TOLERANCE * ckk.abs()) || !d.is_finite() {
                return Err(GmrfError::NotPositiveDefinite { index: self.perm[k], pivot: d });
            }
            lx[next[k]] = d.sqrt();
            next[k] += 1;
        }
        let log_det = 2.0 * (0..n).map(|j| lx[self.l_col_ptr[j]].ln()).sum::<f64>();
        Ok(CholeskyFactor { symbolic: Arc::clone(self), values: lx, log_det })
    }
}

/// Sparse Cholesky factor `P Q Pᵀ = L Lᵀ` with `L` lower triangular.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    symbolic: Arc<SymbolicCholesky>,
    values: Vec<f64>,
    log_det: f64,
}

/// Factorizes `q` with a fresh minimum-degree analysis.
pub fn cholesky(q: &SparsePrecision) -> Result<CholeskyFactor> {
    SymbolicCholesky::analyze(q.pattern()).factor(q)
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.symbolic.dim()
    }

    /// `log det Q`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn symbolic(&self) -> &Arc<SymbolicCholesky> {
        &self.symbolic
    }

    pub fn perm(&self) -> &[usize] {
        &self.symbolic.perm
    }

    /// Diagonal of `L` in permuted order.
    pub fn l_diagonal(&self) -> Vec<f64> {
        let s = &self.symbolic;
        (0..s.dim()).map(|j| self.values[s.l_col_ptr[j]]).collect()
    }

    /// `L` as a dense row-major matrix (permuted coordinates).
    pub fn l_dense(&self) -> Vec<Vec<f64>> {
        let s = &self.symbolic;
        let n = s.dim();
        let mut out = vec![vec![0.0; n]; n];
        for j in 0..n {
            for p in s.l_col_ptr[j]..s.l_col_ptr[j + 1] {
                out[s.l_row[p]][j] = self.values[p];
            }
        }
        out
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(GmrfError::DimensionMismatch { expected: self.dim(), found: len });
        }
        Ok(())
    }

    fn forward_in_place(&self, x: &mut [f64], start: usize) {
        let s = &self.symbolic;
        for j in start..s.dim() {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let p0 = s.l_col_ptr[j];
            let xj = xj / self.values[p0];
            x[j] = xj;
            for p in p0 + 1..s.l_col_ptr[j + 1] {
                x[s.l_row[p]] -= self.values[p] * xj;
            }
        }
    }

    fn backward_in_place(&self, x: &mut [f64]) {
        let s = &self.symbolic;
        for j in (0..s.dim()).rev() {
            let p0 = s.l_col_ptr[j];
            let mut acc = x[j];
            for p in p0 + 1..s.l_col_ptr[j + 1] {
                acc -= self.values[p] * x[s.l_row[p]];
            }
            x[j] = acc / self.values[p0];
        }
    }

    /// Solves `Q x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.check_len(b.len())?;
        let perm = &self.symbolic.perm;
        let mut x: Vec<f64> = perm.iter().map(|&i| b[i]).collect();
        self.forward_in_place(&mut x, 0);
        self.backward_in_place(&mut x);
        let mut out = vec![0.0; x.len()];
        for (k, &i) in perm.iter().enumerate() {
            out[i] = x[k];
        }
        Ok(out)
    }

    /// `L⁻¹ P b`, so that `bᵀ Q⁻¹ b = |L⁻¹ P b|²`.
    pub fn whiten(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.check_len(b.len())?;
        let mut x: Vec<f64> = self.symbolic.perm.iter().map(|&i| b[i]).collect();
        let start = x.iter().position(|v| *v != 0.0).unwrap_or(x.len());
        self.forward_in_place(&mut x, start);
        Ok(x)
    }

    /// `bᵀ Q⁻¹ b`.
    pub fn inverse_quad_form(&self, b: &[f64]) -> Result<f64> {
        Ok(self.whiten(b)?.iter().map(|v| v * v).sum())
    }

    /// Maps iid standard normal draws `z` to a draw from `N(0, Q⁻¹)`.
    pub fn sample_with(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_len(z.len())?;
        let mut x = z.to_vec();
        self.backward_in_place(&mut x);
        let mut out = vec![0.0; x.len()];
        for (k, &i) in self.symbolic.perm.iter().enumerate() {
            out[i] = x[k];
        }
        Ok(out)
    }

    /// Diagonal of `Q⁻¹`, one triangular solve per unit vector.
    pub fn marginal_variances(&self) -> Vec<f64> {
        let s = &self.symbolic;
        let n = s.dim();
        let mut out = vec![0.0; n];
        let mut work = vec![0.0; n];
        for i in 0..n {
            let k = s.pinv[i];
            work[k] = 1.0;
            self.forward_in_place(&mut work, k);
            let mut acc = 0.0;
            for v in work[k..].iter_mut() {
                acc += *v * *v;
                *v = 0.0;
            }
            out[i] = acc;
        }
        out
    }

    /// Entries of `Q⁻¹` on the pattern of `L` (Takahashi recursions).
    pub fn selected_inverse(&self) -> SelectedInverse {
        let s = &self.symbolic;
        let n = s.dim();
        let lp = &s.l_col_ptr;
        let li = &s.l_row;
        let lx = &self.values;
        let mut z = vec![0.0; lx.len()];
        let mut slot = vec![NONE; n];
        let mut acc = vec![0.0; n];
        for j in (0..n).rev() {
            let p0 = lp[j];
            let rows = &li[p0 + 1..lp[j + 1]];
            for (a, &r) in rows.iter().enumerate() {
                slot[r] = a;
                acc[a] = 0.0;
            }
            // acc[i] = Σ_k L_kj Z_ik over k in the column pattern; each Z_ik
            // with i, k > j sits in column min(i, k) of the pattern.
            for (b, &k) in rows.iter().enumerate() {
                let lkj = lx[p0 + 1 + b];
                for p in lp[k]..lp[k + 1] {
                    let i = li[p];
                    if slot[i] == NONE {
                        continue;
                    }
                    let zik = z[p];
                    acc[slot[i]] += lkj * zik;
                    if i != k {
                        acc[b] += lx[p0 + 1 + slot[i]] * zik;
                    }
                }
            }
            let ljj = lx[p0];
            let mut diag = 1.0 / (ljj * ljj);
            for (a, &r) in rows.iter().enumerate() {
                let zij = -acc[a] / ljj;
                z[p0 + 1 + a] = zij;
                diag -= lx[p0 + 1 + a] * zij / ljj;
                slot[r] = NONE;
            }
            z[p0] = diag;
        }
        SelectedInverse { symbolic: Arc::clone(&self.symbolic), values: z }
    }
}

/// Entries of `Q⁻¹` at every position of the factor pattern.
///
/// This covers every pair of indices that appear together in a row of `Q`,
/// and therefore every pair used by a quadratic form `aᵀ Q⁻¹ a` whose support
/// forms a clique of `Q` (or of any pattern merged into `Q` before analysis).
#[derive(Debug, Clone)]
pub struct SelectedInverse {
    symbolic: Arc<SymbolicCholesky>,
    values: Vec<f64>,
}

impl SelectedInverse {
    /// `(Q⁻¹)_ij` if the pair lies on the factor pattern.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.symbolic.factor_position(i, j).map(|p| self.values[p])
    }

    /// Value at a position obtained from [`SymbolicCholesky::factor_position`].
    pub fn at(&self, position: usize) -> f64 {
        self.values[position]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let s = &self.symbolic;
        let mut out = vec![0.0; s.dim()];
        for (k, &i) in s.perm.iter().enumerate() {
            out[i] = self.values[s.l_col_ptr[k]];
        }
        out
    }
}
