//! Lattice exploration of the hyperparameter posterior around its mode.
//!
//! Points live on a regular lattice in standardized coordinates `z`, where
//! `x = mode + Σ_i z_i · axis_i` and the axes are the eigenvectors of the
//! negative Hessian scaled by `λ_i^{-1/2}`. All points carry the same
//! integration weight.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{InlaError, Result};
use crate::optimize::{negative_hessian_eigen, LogDensity};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridOptions {
    /// Lattice spacing in standardized units.
    pub step: f64,
    /// Points whose log density falls more than this below the mode are
    /// excluded and not expanded.
    pub drop_threshold: f64,
    /// Largest lattice index per axis on either side of the mode.
    pub max_steps: i32,
    /// Eigenvalue floor for the negative Hessian.
    pub eigen_floor: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self { step: 0.75, drop_threshold: 2.5, max_steps: 5, eigen_floor: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGridPoint {
    pub lattice: Vec<i32>,
    pub x: Vec<f64>,
    pub log_density: f64,
    /// Integration weight `Δ_h` (identical for every point).
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub points: Vec<HyperGridPoint>,
    pub mode: Vec<f64>,
    /// `axes[i]` is the displacement of one standardized unit along lattice
    /// direction `i`.
    pub axes: Vec<Vec<f64>>,
    pub step: f64,
    pub drop_threshold: f64,
    /// True when the Hessian was degenerate and the grid degraded to
    /// independent scans along the coordinate axes.
    pub axis_scan_fallback: bool,
}

impl HyperGrid {
    pub fn dim(&self) -> usize {
        self.mode.len()
    }

    /// Posterior masses `∝ exp(log_density) · Δ`, summing to one.
    pub fn normalized_weights(&self) -> Vec<f64> {
        let max = self.points.iter().map(|p| p.log_density).fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = self.points.iter().map(|p| (p.log_density - max).exp() * p.weight).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }

    /// Standard deviation implied by the lattice axes along coordinate `k`.
    pub fn axis_scale(&self, k: usize) -> f64 {
        if self.axis_scan_fallback {
            return self.axes[k][k].abs();
        }
        self.axes.iter().map(|a| a[k] * a[k]).sum::<f64>().sqrt()
    }

    fn position(&self, lattice: &[i32]) -> Vec<f64> {
        let mut x = self.mode.clone();
        for (i, &k) in lattice.iter().enumerate() {
            let z = k as f64 * self.step;
            for (xv, a) in x.iter_mut().zip(&self.axes[i]) {
                *xv += z * a;
            }
        }
        x
    }
}

/// Explores the lattice breadth-first from the mode. Each wave of candidate
/// points is evaluated in parallel; the final list is sorted by lattice
/// coordinates so the result does not depend on evaluation order.
pub fn explore_grid<F: LogDensity + ?Sized>(
    f: &F,
    mode: &[f64],
    hessian: &[Vec<f64>],
    opts: &GridOptions,
) -> Result<HyperGrid> {
    let d = mode.len();
    if hessian.len() != d || hessian.iter().any(|r| r.len() != d) {
        return Err(InlaError::DimensionMismatch { expected: d, found: hessian.len() });
    }
    if !(opts.step > 0.0 && opts.drop_threshold > 0.0 && opts.max_steps >= 0) {
        return Err(InlaError::InvalidArgument("grid step, drop threshold and max steps must be positive".into()));
    }
    if d == 0 {
        let v = f.log_density(&[])?;
        return Ok(HyperGrid {
            points: vec![HyperGridPoint { lattice: Vec::new(), x: Vec::new(), log_density: v, weight: 1.0 }],
            mode: Vec::new(),
            axes: Vec::new(),
            step: opts.step,
            drop_threshold: opts.drop_threshold,
            axis_scan_fallback: false,
        });
    }

    let (values, vectors, degenerate) = negative_hessian_eigen(hessian, opts.eigen_floor);
    let (axes, fallback) = if degenerate {
        log::warn!("hyperparameter Hessian is not negative definite; falling back to axis scans");
        let axes: Vec<Vec<f64>> = (0..d)
            .map(|k| {
                let curv = -hessian[k][k];
                let scale = if curv > opts.eigen_floor { 1.0 / curv.sqrt() } else { 1.0 };
                let mut a = vec![0.0; d];
                a[k] = scale;
                a
            })
            .collect();
        (axes, true)
    } else {
        let axes = values.iter().zip(&vectors).map(|(l, v)| v.iter().map(|c| c / l.sqrt()).collect()).collect();
        (axes, false)
    };
    let jacobian: f64 = if fallback {
        (0..d).map(|k| axes[k][k]).product::<f64>()
    } else {
        values.iter().map(|l| 1.0 / l.sqrt()).product()
    };
    let weight = opts.step.powi(d as i32) * jacobian.abs();

    let mut grid = HyperGrid {
        points: Vec::new(),
        mode: mode.to_vec(),
        axes,
        step: opts.step,
        drop_threshold: opts.drop_threshold,
        axis_scan_fallback: fallback,
    };

    let origin = vec![0i32; d];
    let mode_value = f.log_density(&grid.position(&origin))?;
    let mut visited: BTreeSet<Vec<i32>> = BTreeSet::new();
    visited.insert(origin.clone());
    let mut accepted = vec![HyperGridPoint { lattice: origin.clone(), x: mode.to_vec(), log_density: mode_value, weight }];
    let mut frontier = neighbors(&origin, opts.max_steps, fallback);
    frontier.retain(|p| visited.insert(p.clone()));

    while !frontier.is_empty() {
        let evaluated: Vec<(Vec<i32>, Vec<f64>, Option<f64>)> = frontier
            .par_iter()
            .map(|lat| {
                let x = grid.position(lat);
                let v = f.log_density(&x).ok().filter(|v| v.is_finite());
                (lat.clone(), x, v)
            })
            .collect();
        let mut next = BTreeSet::new();
        for (lat, x, v) in evaluated {
            let Some(v) = v else { continue };
            if mode_value - v > opts.drop_threshold {
                continue;
            }
            for nb in neighbors(&lat, opts.max_steps, fallback) {
                if !visited.contains(&nb) {
                    next.insert(nb);
                }
            }
            accepted.push(HyperGridPoint { lattice: lat, x, log_density: v, weight });
        }
        for p in &next {
            visited.insert(p.clone());
        }
        frontier = next.into_iter().collect();
    }
    accepted.sort_by(|a, b| a.lattice.cmp(&b.lattice));
    grid.points = accepted;
    Ok(grid)
}

fn neighbors(lattice: &[i32], max_steps: i32, axis_only: bool) -> Vec<Vec<i32>> {
    let mut out = Vec::new();
    let off_axis = lattice.iter().filter(|&&k| k != 0).count();
    for i in 0..lattice.len() {
        if axis_only && off_axis > 0 && lattice[i] == 0 {
            continue;
        }
        for delta in [-1, 1] {
            let k = lattice[i] + delta;
            if k.abs() <= max_steps {
                let mut nb = lattice.to_vec();
                nb[i] = k;
                out.push(nb);
            }
        }
    }
    out.sort();
    out
}

/// Discrete marginal of coordinate `k` as `(value, mass)` pairs in increasing
/// order of value, on bins of width `step × sd_k` centred on the mode.
///
/// Each lattice point stands for its cell `z ± step/2` in standardized
/// coordinates; the cell projects onto coordinate `k` as a sum of uniform
/// variables, and the point's mass is split across bins by that projected
/// law. For a one-dimensional or axis-aligned grid the projection is exactly
/// one bin, so the marginal is the collapsed normalized mass.
pub fn marginal_hyperparameter(grid: &HyperGrid, k: usize) -> Result<Vec<(f64, f64)>> {
    if k >= grid.dim() {
        return Err(InlaError::InvalidArgument(format!("coordinate {k} outside grid dimension {}", grid.dim())));
    }
    let width = grid.step * grid.axis_scale(k);
    let kernel = CellKernel::new(grid.axes.iter().map(|a| grid.step * a[k].abs()).collect());
    let weights = grid.normalized_weights();
    let mut bins: std::collections::BTreeMap<i64, f64> = std::collections::BTreeMap::new();
    for (p, w) in grid.points.iter().zip(weights) {
        let u = (p.x[k] - grid.mode[k]) / width;
        let lo = (u - kernel.half_support / width - 0.5).floor() as i64;
        let hi = (u + kernel.half_support / width + 0.5).ceil() as i64;
        for i in lo..=hi {
            let left = (i as f64 - 0.5) * width - (p.x[k] - grid.mode[k]);
            let mass = w * (kernel.cdf(left + width) - kernel.cdf(left));
            if mass > 0.0 {
                *bins.entry(i).or_insert(0.0) += mass;
            }
        }
    }
    Ok(bins.into_iter().map(|(i, m)| (grid.mode[k] + i as f64 * width, m)).collect())
}

/// Law of a sum of independent centred uniforms with the given widths.
struct CellKernel {
    half_support: f64,
    shape: KernelShape,
}

enum KernelShape {
    Uniform,
    /// CDF tabulated at `-half_support + j·delta`.
    Tabulated { delta: f64, cdf: Vec<f64> },
}

impl CellKernel {
    const RESOLUTION: usize = 2000;

    fn new(widths: Vec<f64>) -> Self {
        let total: f64 = widths.iter().sum();
        let significant: Vec<f64> = widths.into_iter().filter(|&w| w > 1e-12 * total).collect();
        if significant.len() <= 1 {
            return Self { half_support: total / 2.0, shape: KernelShape::Uniform };
        }
        let delta = total / Self::RESOLUTION as f64;
        let mut pmf = vec![1.0];
        for w in &significant {
            let taps = ((w / delta).round() as usize).max(1);
            let mut next = vec![0.0; pmf.len() + taps - 1];
            for (i, p) in pmf.iter().enumerate() {
                for v in &mut next[i..i + taps] {
                    *v += p / taps as f64;
                }
            }
            pmf = next;
        }
        // Each tap is spread uniformly over its own δ-cell.
        let half_support = pmf.len() as f64 * delta / 2.0;
        let mut cdf = Vec::with_capacity(pmf.len() + 1);
        let mut acc = 0.0;
        cdf.push(0.0);
        for p in pmf {
            acc += p;
            cdf.push(acc);
        }
        Self { half_support, shape: KernelShape::Tabulated { delta, cdf } }
    }

    fn cdf(&self, x: f64) -> f64 {
        let h = self.half_support;
        if x <= -h {
            return 0.0;
        }
        if x >= h {
            return 1.0;
        }
        match &self.shape {
            KernelShape::Uniform => (x + h) / (2.0 * h),
            KernelShape::Tabulated { delta, cdf } => {
                let t = (x + h) / delta;
                let j = (t.floor() as usize).min(cdf.len() - 2);
                let f = t - j as f64;
                cdf[j] + f * (cdf[j + 1] - cdf[j])
            }
        }
    }
}
