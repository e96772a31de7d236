//! Random small latent Gaussian models together with an independent dense
//! description of the same model (design matrix, prior precision,
//! constraints) for oracle comparisons.

#![allow(dead_code)]

use gmrf::{AdjacencyGraph, TreeIndex};
use inla::{EffectBlock, HyperPrior, LatentGaussianModel, ModelBuilder, TreeSlots};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub struct DenseModel {
    pub model: LatentGaussianModel,
    pub y: DVector<f64>,
    pub a: DMatrix<f64>,
    /// Constraint rows `C` (one per row), possibly empty.
    pub c: DMatrix<f64>,
    pub psi: Vec<f64>,
    pub noise_slot: usize,
    prior_parts: Vec<PriorPart>,
    n_fixed: usize,
}

enum PriorPart {
    Fixed(usize, f64),
    Diag(Vec<usize>),
    Icar(Vec<(usize, usize)>, usize, usize),
}

pub struct Options {
    pub icar: bool,
    pub fixed_hyper: bool,
    pub n_obs: usize,
    /// Constant added to every response.
    pub shift: f64,
}

impl Default for Options {
    fn default() -> Self {
        Self { icar: false, fixed_hyper: true, n_obs: 30, shift: 0.0 }
    }
}

pub fn random_model(seed: u64, opts: &Options) -> DenseModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = opts.n_obs;
    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
    let y: Vec<f64> = (0..n).map(|_| 2.0 + opts.shift + normal(&mut rng)).collect();
    let x1: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();

    let psi_noise = rng.gen_range(-0.5..1.5);
    let psi_iid = rng.gen_range(-1.0..1.5);
    let psi_sr = rng.gen_range(-0.5..2.0);
    let psi_r = rng.gen_range(-0.5..2.0);
    let psi_c = rng.gen_range(-0.5..2.0);
    let psi_icar = rng.gen_range(-0.5..1.5);
    let prior = |v: f64| if opts.fixed_hyper { HyperPrior::Fixed { log_precision: v } } else { HyperPrior::default() };

    let mut b = ModelBuilder::new(y.clone());
    let noise_slot = b.add_noise_slot(prior(psi_noise));
    let s_iid = b.add_slot("iid", prior(psi_iid));
    let s_sr = b.add_slot("sr", prior(psi_sr));
    let s_r = b.add_slot("r", prior(psi_r));
    let s_c = b.add_slot("c", prior(psi_c));
    let mut psi = vec![psi_noise, psi_iid, psi_sr, psi_r, psi_c];
    b.add_intercept();
    b.add_fixed("x1", x1.clone());
    let n_fixed = 2;

    let iid_levels = 4;
    let iid_inc: Vec<usize> = (0..n).map(|_| rng.gen_range(0..iid_levels)).collect();
    let iid_mult: Option<Vec<f64>> = if rng.gen_bool(0.5) { Some(x1.clone()) } else { None };
    b.add_block(EffectBlock::iid("iid", iid_levels, iid_inc.clone(), iid_mult.clone(), s_iid));

    let leaf_parent = vec![0, 0, 1, 1, 2, 2];
    let region_parent = vec![0, 0, 1];
    let tree = TreeIndex::new(leaf_parent.clone(), region_parent.clone(), 2).unwrap();
    let tree_inc: Vec<usize> = (0..n).map(|_| rng.gen_range(0..6)).collect();
    let tree_mult: Option<Vec<f64>> =
        if rng.gen_bool(0.5) { Some((0..n).map(|_| rng.gen_range(-1.0..2.0)).collect()) } else { None };
    b.add_block(EffectBlock::nested_tree("tree", tree, tree_inc.clone(), tree_mult.clone(), TreeSlots::shared(s_sr, s_r, s_c)));

    let icar_edges = vec![(0, 1), (1, 2), (2, 3), (1, 3), (4, 5)];
    let icar_nodes = 6;
    let icar_inc: Vec<usize> = (0..n).map(|_| rng.gen_range(0..icar_nodes)).collect();
    let mut d = n_fixed + iid_levels + 11;
    if opts.icar {
        let s_icar = b.add_slot("icar", prior(psi_icar));
        psi.push(psi_icar);
        let g = AdjacencyGraph::from_edges(icar_nodes, icar_edges.clone()).unwrap();
        b.add_block(EffectBlock::icar("icar", g, icar_inc.clone(), None, s_icar));
        d += icar_nodes;
    }
    let model = b.build().unwrap();

    // Dense design, written out independently of the model's own rows.
    let mut a = DMatrix::<f64>::zeros(n, d);
    for s in 0..n {
        a[(s, 0)] = 1.0;
        a[(s, 1)] = x1[s];
        a[(s, 2 + iid_inc[s])] = iid_mult.as_ref().map_or(1.0, |m| m[s]);
        let leaf = tree_inc[s];
        let region = leaf_parent[leaf];
        let sup = region_parent[region];
        let m = tree_mult.as_ref().map_or(1.0, |m| m[s]);
        let off = 2 + iid_levels;
        a[(s, off + sup)] += m;
        a[(s, off + 2 + region)] += m;
        a[(s, off + 5 + leaf)] += m;
        if opts.icar {
            a[(s, off + 11 + icar_inc[s])] = 1.0;
        }
    }
    let mut parts = vec![
        PriorPart::Fixed(n_fixed, 1e-6),
        PriorPart::Diag(vec![s_iid; iid_levels]),
        PriorPart::Diag([vec![s_sr; 2], vec![s_r; 3], vec![s_c; 6]].concat()),
    ];
    let c = if opts.icar {
        parts.push(PriorPart::Icar(icar_edges, icar_nodes, 5));
        let off = n_fixed + iid_levels + 11;
        let mut c = DMatrix::<f64>::zeros(2, d);
        for i in 0..4 {
            c[(0, off + i)] = 1.0;
        }
        for i in 4..6 {
            c[(1, off + i)] = 1.0;
        }
        c
    } else {
        DMatrix::zeros(0, d)
    };
    DenseModel { model, y: DVector::from_vec(y), a, c, psi, noise_slot, prior_parts: parts, n_fixed }
}

impl DenseModel {
    pub fn theta_dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn prior_precision(&self, psi: &[f64]) -> DMatrix<f64> {
        let d = self.theta_dim();
        let mut q = DMatrix::<f64>::zeros(d, d);
        let mut off = 0;
        for part in &self.prior_parts {
            match part {
                PriorPart::Fixed(k, p) => {
                    for i in 0..*k {
                        q[(off + i, off + i)] = *p;
                    }
                    off += k;
                }
                PriorPart::Diag(slots) => {
                    for (i, &s) in slots.iter().enumerate() {
                        q[(off + i, off + i)] = psi[s].exp();
                    }
                    off += slots.len();
                }
                PriorPart::Icar(edges, n, slot) => {
                    let tau = psi[*slot].exp();
                    let mut deg = vec![0.0; *n];
                    for &(a, b) in edges {
                        q[(off + a, off + b)] -= tau;
                        q[(off + b, off + a)] -= tau;
                        deg[a] += 1.0;
                        deg[b] += 1.0;
                    }
                    let eps = 1e-6 * tau * deg.iter().sum::<f64>() / *n as f64;
                    for i in 0..*n {
                        q[(off + i, off + i)] += tau * deg[i] + eps;
                    }
                    off += n;
                }
            }
        }
        q
    }

    /// Prior covariance, conditioned on `Cθ = 0` when constraints exist.
    pub fn prior_covariance(&self, psi: &[f64]) -> DMatrix<f64> {
        restricted_inverse(&self.prior_precision(psi), &self.c)
    }

    /// Posterior mean and covariance of θ given ψ (and `Cθ = 0`).
    pub fn posterior(&self, psi: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let tau = psi[self.noise_slot].exp();
        let q = self.prior_precision(psi) + self.a.transpose() * &self.a * tau;
        let sigma = restricted_inverse(&q, &self.c);
        let mean = &sigma * self.a.transpose() * &self.y * tau;
        (mean, sigma)
    }

    /// `log N(y; 0, A Σ_prior Aᵀ + I/τ)`.
    pub fn log_marginal_likelihood(&self, psi: &[f64]) -> f64 {
        let tau = psi[self.noise_slot].exp();
        let n = self.y.len();
        let v = &self.a * self.prior_covariance(psi) * self.a.transpose() + DMatrix::identity(n, n) / tau;
        log_normal_density(&self.y, &v)
    }
}

/// Orthonormal basis of the null space of `c` (all of `R^d` when `c` has no
/// rows).
pub fn null_space_basis(c: &DMatrix<f64>) -> DMatrix<f64> {
    let d = c.ncols();
    if c.nrows() == 0 {
        return DMatrix::identity(d, d);
    }
    let svd = c.transpose().svd(true, false);
    // Columns of the full left singular basis beyond the rank of Cᵀ.
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10).count();
    let u = complete_basis(&svd.u.unwrap().columns(0, rank).into_owned());
    u.columns(rank, d - rank).into_owned()
}

/// Extends orthonormal columns `u` to an orthonormal basis of `R^d`.
fn complete_basis(u: &DMatrix<f64>) -> DMatrix<f64> {
    let d = u.nrows();
    let mut cols: Vec<DVector<f64>> = u.column_iter().map(|c| c.into_owned()).collect();
    for e in 0..d {
        let mut v = DVector::<f64>::zeros(d);
        v[e] = 1.0;
        for _ in 0..2 {
            for c in &cols {
                let p = c.dot(&v);
                v -= c * p;
            }
        }
        let n = v.norm();
        if n > 1e-8 {
            cols.push(v / n);
        }
        if cols.len() == d {
            break;
        }
    }
    DMatrix::from_columns(&cols)
}

/// Covariance of the Gaussian with precision `q` restricted to `Cθ = 0`:
/// `B (Bᵀ Q B)⁻¹ Bᵀ` with `B` an orthonormal null-space basis of `C`.
pub fn restricted_inverse(q: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let b = null_space_basis(c);
    let inner = (b.transpose() * q * &b).cholesky().unwrap().inverse();
    let out = &b * inner * b.transpose();
    (&out + out.transpose()) * 0.5
}

pub fn log_normal_density(x: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let n = x.len() as f64;
    let chol = cov.clone().cholesky().unwrap();
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let z = chol.solve(x);
    -0.5 * n * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det - 0.5 * x.dot(&z)
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}
