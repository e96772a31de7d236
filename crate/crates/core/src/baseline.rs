//! The single global calibration used before the hierarchical model:
//! ordinary least squares of the cell-averaged log concentration on the
//! network indicators and the mean of the satellite and chemical-transport
//! estimates.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GridCellRecord, MonitorRecord};
use crate::error::{DimaqError, Result};

pub const BASELINE_COLUMNS: [&str; 5] = ["intercept", "x1", "x2", "x3", "x45"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineFit {
    /// Coefficients in [`BASELINE_COLUMNS`] order; indicators absent from
    /// the data (all zero) are held at 0.
    pub coefficients: Vec<f64>,
    /// Columns dropped because they were identically zero.
    pub dropped: Vec<String>,
    pub n_cells: usize,
    /// Maximum-likelihood residual variance `RSS / n`.
    pub residual_variance: f64,
    pub log_likelihood: f64,
}

impl BaselineFit {
    fn row(ind: [f64; 3], cell: &GridCellRecord) -> [f64; 5] {
        [1.0, ind[0], ind[1], ind[2], 0.5 * (cell.x4_sat + cell.x5_tm5)]
    }

    /// Log-scale prediction for indicators `ind` in `cell`.
    pub fn predict_log(&self, ind: [f64; 3], cell: &GridCellRecord) -> f64 {
        Self::row(ind, cell).iter().zip(&self.coefficients).map(|(x, b)| x * b).sum()
    }

    /// `−2 log L + 2p` with the variance counted as a parameter.
    pub fn dic(&self) -> f64 {
        let p = (self.coefficients.len() - self.dropped.len() + 1) as f64;
        -2.0 * self.log_likelihood + 2.0 * p
    }
}

/// Fits the baseline on the monitors of `data`. Monitors sharing a cell are
/// averaged (log response and indicators) into one observation.
pub fn gbd2013_baseline(data: &Dataset) -> Result<BaselineFit> {
    fit_monitors(&data.monitors, |id| data.cell(id))
}

pub fn fit_monitors<'a>(
    monitors: &[MonitorRecord],
    cell_of: impl Fn(u64) -> Option<&'a GridCellRecord>,
) -> Result<BaselineFit> {
    let mut groups: BTreeMap<u64, (usize, [f64; 4])> = BTreeMap::new();
    for m in monitors {
        let g = groups.entry(m.cell_id).or_insert((0, [0.0; 4]));
        g.0 += 1;
        let ind = m.indicators();
        for (acc, v) in g.1.iter_mut().zip([m.value.ln(), ind[0], ind[1], ind[2]]) {
            *acc += v;
        }
    }
    if groups.len() < 2 {
        return Err(DimaqError::InsufficientData(format!("baseline needs at least 2 cells with monitors, found {}", groups.len())));
    }
    let n = groups.len();
    let mut x = DMatrix::<f64>::zeros(n, 5);
    let mut y = DVector::<f64>::zeros(n);
    for (r, (&id, &(count, sums))) in groups.iter().enumerate() {
        let cell = cell_of(id).ok_or_else(|| DimaqError::Unresolved { kind: "cells".into(), ids: vec![id.to_string()] })?;
        let k = count as f64;
        let row = BaselineFit::row([sums[1] / k, sums[2] / k, sums[3] / k], cell);
        for (c, v) in row.iter().enumerate() {
            x[(r, c)] = *v;
        }
        y[r] = sums[0] / k;
    }

    let keep: Vec<usize> = (0..5).filter(|&c| c == 0 || c == 4 || x.column(c).iter().any(|&v| v != 0.0)).collect();
    let dropped: Vec<String> = (0..5).filter(|c| !keep.contains(c)).map(|c| BASELINE_COLUMNS[c].to_string()).collect();
    let xk = x.select_columns(&keep);
    check_rank(&xk, &keep)?;
    let qr = xk.clone().qr();
    let rhs = qr.q().transpose() * &y;
    let beta_k = qr.r().solve_upper_triangular(&rhs).ok_or_else(|| DimaqError::Collinear {
        columns: keep.iter().map(|&c| BASELINE_COLUMNS[c].to_string()).collect(),
    })?;
    let mut coefficients = vec![0.0; 5];
    for (&c, &b) in keep.iter().zip(beta_k.iter()) {
        coefficients[c] = b;
    }
    let resid = &y - &xk * &beta_k;
    let rss = resid.norm_squared();
    let residual_variance = rss / n as f64;
    let log_likelihood = if residual_variance > 0.0 {
        -0.5 * n as f64 * ((2.0 * std::f64::consts::PI * residual_variance).ln() + 1.0)
    } else {
        f64::INFINITY
    };
    Ok(BaselineFit { coefficients, dropped, n_cells: n, residual_variance, log_likelihood })
}

/// Gram–Schmidt sweep; a column whose residual after projecting on the
/// earlier ones is negligible is reported with the columns it depends on.
fn check_rank(x: &DMatrix<f64>, names: &[usize]) -> Result<()> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut kept: Vec<usize> = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let scale = col.norm();
        let mut v = col.clone();
        for _ in 0..2 {
            for q in &basis {
                let p = q.dot(&v);
                v -= q * p;
            }
        }
        if scale == 0.0 || v.norm() <= 1e-10 * scale {
            let sub = x.select_columns(&kept);
            let coef = sub.clone().svd(true, true).solve(&col, 1e-12).unwrap_or_else(|_| DVector::zeros(kept.len()));
            let mut columns: Vec<String> = kept
                .iter()
                .zip(coef.iter())
                .filter(|(_, c)| c.abs() > 1e-8)
                .map(|(&k, _)| BASELINE_COLUMNS[names[k]].to_string())
                .collect();
            columns.push(BASELINE_COLUMNS[names[j]].to_string());
            return Err(DimaqError::Collinear { columns });
        }
        basis.push(&v / v.norm());
        kept.push(j);
    }
    Ok(())
}
