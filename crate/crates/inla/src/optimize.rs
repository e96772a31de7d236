//! Mode search on a log density with finite-difference derivatives.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{InlaError, Result};

/// A log density over `R^dim`, evaluated up to an additive constant.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;
    fn log_density(&self, x: &[f64]) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModeOptions {
    /// Convergence threshold on the Euclidean norm of the gradient.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Step of the central-difference gradient.
    pub fd_step: f64,
    /// Step of the central-difference Hessian.
    pub hessian_step: f64,
    /// Smallest eigenvalue kept when inverting the negative Hessian.
    pub eigen_floor: f64,
    /// Longest quasi-Newton step, in the density's coordinates.
    pub max_step: f64,
}

impl Default for ModeOptions {
    fn default() -> Self {
        Self { grad_tol: 1e-5, max_iter: 200, fd_step: 1e-4, hessian_step: 2e-3, eigen_floor: 1e-8, max_step: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Hessian of the log density at the mode (symmetrized finite differences).
    pub hessian: Vec<Vec<f64>>,
    pub iterations: usize,
    pub trajectory: Vec<Vec<f64>>,
}

impl ModeResult {
    pub fn grad_norm(&self) -> f64 {
        norm(&self.gradient)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Central-difference gradient with step `h`.
pub fn fd_gradient<F: LogDensity + ?Sized>(f: &F, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut g = vec![0.0; x.len()];
    let mut z = x.to_vec();
    for i in 0..x.len() {
        z[i] = x[i] + h;
        let up = f.log_density(&z)?;
        z[i] = x[i] - h;
        let down = f.log_density(&z)?;
        z[i] = x[i];
        g[i] = (up - down) / (2.0 * h);
    }
    Ok(g)
}

/// Central-difference Hessian with step `h`, symmetrized.
pub fn fd_hessian<F: LogDensity + ?Sized>(f: &F, x: &[f64], h: f64) -> Result<Vec<Vec<f64>>> {
    let d = x.len();
    let f0 = f.log_density(x)?;
    let mut hess = vec![vec![0.0; d]; d];
    let mut z = x.to_vec();
    for i in 0..d {
        z[i] = x[i] + h;
        let up = f.log_density(&z)?;
        z[i] = x[i] - h;
        let down = f.log_density(&z)?;
        z[i] = x[i];
        hess[i][i] = (up - 2.0 * f0 + down) / (h * h);
    }
    for i in 0..d {
        for j in i + 1..d {
            let mut eval = |si: f64, sj: f64| {
                z[i] = x[i] + si * h;
                z[j] = x[j] + sj * h;
                let v = f.log_density(&z);
                z[i] = x[i];
                z[j] = x[j];
                v
            };
            let v = (eval(1.0, 1.0)? - eval(1.0, -1.0)? - eval(-1.0, 1.0)? + eval(-1.0, -1.0)?) / (4.0 * h * h);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    Ok(hess)
}

/// Eigen-decomposition of `−hessian` with eigenvalues floored at `floor`,
/// pairs sorted by decreasing eigenvalue and eigenvector signs fixed so that
/// the largest-magnitude component is positive. Returns `(values, vectors)`
/// with `vectors[k]` the k-th eigenvector, and whether flooring was needed.
pub fn negative_hessian_eigen(hessian: &[Vec<f64>], floor: f64) -> (Vec<f64>, Vec<Vec<f64>>, bool) {
    let d = hessian.len();
    let m = DMatrix::from_fn(d, d, |i, j| -0.5 * (hessian[i][j] + hessian[j][i]));
    let eig = SymmetricEigen::new(m);
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..d)
        .map(|k| {
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            let lead = v.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            if lead < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            (eig.eigenvalues[k], v)
        })
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let degenerate = pairs.iter().any(|(l, _)| !(*l > floor));
    let values = pairs.iter().map(|(l, _)| l.max(floor)).collect();
    let vectors = pairs.into_iter().map(|(_, v)| v).collect();
    (values, vectors, degenerate)
}

/// Maximizes `f` by BFGS on finite-difference gradients with Armijo
/// backtracking, finishing with Newton steps on a finite-difference Hessian
/// when the quasi-Newton iteration stalls.
pub fn find_mode<F: LogDensity + ?Sized>(f: &F, start: &[f64], opts: &ModeOptions) -> Result<ModeResult> {
    let d = f.dim();
    if start.len() != d {
        return Err(InlaError::DimensionMismatch { expected: d, found: start.len() });
    }
    if d == 0 {
        let value = f.log_density(start)?;
        return Ok(ModeResult {
            x: Vec::new(),
            value,
            gradient: Vec::new(),
            hessian: Vec::new(),
            iterations: 0,
            trajectory: Vec::new(),
        });
    }
    let mut x = start.to_vec();
    let mut value = f.log_density(&x)?;
    let mut grad = fd_gradient(f, &x, opts.fd_step)?;
    let mut h_inv = DMatrix::<f64>::identity(d, d);
    let mut trajectory = vec![x.clone()];
    let mut iterations = 0;
    let mut newton_mode = false;

    while norm(&grad) > opts.grad_tol {
        if iterations >= opts.max_iter {
            return Err(InlaError::NonConvergence { iterations, grad_norm: norm(&grad), trajectory });
        }
        iterations += 1;
        let g = DVector::from_column_slice(&grad);
        let mut dir: DVector<f64> = if newton_mode {
            let hess = fd_hessian(f, &x, opts.hessian_step)?;
            let (vals, vecs, _) = negative_hessian_eigen(&hess, opts.eigen_floor.max(1e-6));
            let mut step = DVector::zeros(d);
            for (l, v) in vals.iter().zip(&vecs) {
                let v = DVector::from_column_slice(v);
                step += &v * (v.dot(&g) / l);
            }
            step
        } else {
            &h_inv * &g
        };
        if dir.dot(&g) <= 0.0 {
            // Not an ascent direction: restart from steepest ascent.
            h_inv = DMatrix::identity(d, d);
            dir = g.clone();
        }
        let len = dir.norm();
        if len > opts.max_step {
            dir *= opts.max_step / len;
        }

        let slope = dir.dot(&g);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(dir.iter()).map(|(a, b)| a + alpha * b).collect();
            if let Ok(v) = f.log_density(&trial) {
                if v >= value + 1e-4 * alpha * slope {
                    accepted = Some((trial, v));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((next, next_value)) = accepted else {
            if newton_mode {
                return Err(InlaError::NonConvergence { iterations, grad_norm: norm(&grad), trajectory });
            }
            newton_mode = true;
            continue;
        };
        let next_grad = fd_gradient(f, &next, opts.fd_step)?;
        let s = DVector::from_iterator(d, next.iter().zip(&x).map(|(a, b)| a - b));
        // Curvature pair for minimizing −f.
        let yv = DVector::from_iterator(d, grad.iter().zip(&next_grad).map(|(a, b)| a - b));
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.norm() * yv.norm() {
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(d, d);
            let left = &eye - (&s * yv.transpose()) * rho;
            let right = &eye - (&yv * s.transpose()) * rho;
            h_inv = &left * &h_inv * &right + (&s * s.transpose()) * rho;
        }
        x = next;
        value = next_value;
        grad = next_grad;
        trajectory.push(x.clone());
    }

    let hessian = fd_hessian(f, &x, opts.hessian_step)?;
    Ok(ModeResult { x, value, gradient: grad, hessian, iterations, trajectory })
}
