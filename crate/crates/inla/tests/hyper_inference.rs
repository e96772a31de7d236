//! Mode search, lattice integration, mixture summaries and DIC against
//! brute-force quadrature and sampling oracles.

mod common;

use inla::{
    explore_grid, fd_gradient, find_mode, fit, marginal_hyperparameter, EffectBlock, GridOptions, HyperObjective,
    HyperPrior, InlaConfig, InlaError, LatentGaussianModel, LogDensity, MixtureComponent, MixtureMarginal,
    ModeOptions, ModelBuilder, Scale,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal as SNormal};

/// `log Gamma(1, 5e-5)` density of a precision, expressed in log precision.
fn oracle_log_prior(psi: f64) -> f64 {
    let b: f64 = 5e-5;
    b.ln() + psi - b * psi.exp()
}

fn intercept_model(n: usize, true_tau: f64, seed: u64) -> LatentGaussianModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0 / true_tau.sqrt()).unwrap();
    let y: Vec<f64> = (0..n).map(|_| 3.0 + noise.sample(&mut rng)).collect();
    let mut b = ModelBuilder::new(y);
    b.add_noise_slot(HyperPrior::default());
    b.add_intercept();
    b.build().unwrap()
}

#[test]
fn one_dimensional_mode_recovers_noise_precision() {
    let true_tau = 4.0;
    let model = intercept_model(500, true_tau, 1);
    let obj = HyperObjective::new(&model, &[0.0]).unwrap();
    let mode = find_mode(&obj, &[0.0], &ModeOptions::default()).unwrap();
    assert!(mode.grad_norm() <= 1e-5);
    assert!(mode.hessian[0][0] < 0.0);

    // Fine scan oracle.
    let step = 1e-3;
    let (mut best, mut best_v) = (f64::NAN, f64::NEG_INFINITY);
    let mut psi = true_tau.ln() - 1.0;
    while psi <= true_tau.ln() + 1.0 {
        let v = obj.log_density(&[psi]).unwrap();
        if v > best_v {
            best = psi;
            best_v = v;
        }
        psi += step;
    }
    assert!((mode.x[0] - best).abs() <= step, "{} vs {best}", mode.x[0]);
    assert!((mode.x[0].exp() / true_tau - 1.0).abs() < 0.15);
}

#[test]
fn symmetric_groups_get_equal_precisions() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let half: Vec<f64> = (0..24).map(|i| (i % 4) as f64 + rng.gen_range(-0.5..0.5)).collect();
    let y = [half.clone(), half].concat();
    let levels: Vec<usize> = (0..48).map(|i| i % 4).collect();
    let in_a: Vec<f64> = (0..48).map(|i| if i < 24 { 1.0 } else { 0.0 }).collect();
    let in_b: Vec<f64> = in_a.iter().map(|v| 1.0 - v).collect();
    let mut b = ModelBuilder::new(y);
    b.add_noise_slot(HyperPrior::default());
    let sa = b.add_slot("a", HyperPrior::default());
    let sb = b.add_slot("b", HyperPrior::default());
    b.add_intercept();
    b.add_block(EffectBlock::iid("a", 4, levels.clone(), Some(in_a), sa));
    b.add_block(EffectBlock::iid("b", 4, levels, Some(in_b), sb));
    let model = b.build().unwrap();
    let f = fit(&model, &InlaConfig::default(), None).unwrap();
    let psi = f.mode_psi();
    assert!((psi[sa] - psi[sb]).abs() < 1e-3, "{} vs {}", psi[sa], psi[sb]);
}

fn two_slot_model(seed: u64) -> LatentGaussianModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let effects: Vec<f64> = (0..8).map(|_| 1.5 * rng.sample::<f64, _>(StandardNormal)).collect();
    let levels: Vec<usize> = (0..80).map(|s| s % 8).collect();
    let y: Vec<f64> = levels.iter().map(|&l| 1.0 + effects[l] + 0.7 * rng.sample::<f64, _>(StandardNormal)).collect();
    let mut b = ModelBuilder::new(y);
    b.add_noise_slot(HyperPrior::default());
    let s = b.add_slot("group", HyperPrior::default());
    b.add_intercept();
    b.add_block(EffectBlock::iid("group", 8, levels, None, s));
    b.build().unwrap()
}

#[test]
fn two_dimensional_mode_matches_scan_argmax() {
    let model = two_slot_model(8);
    let obj = HyperObjective::new(&model, &[0.0, 0.0]).unwrap();
    let mode = find_mode(&obj, &[0.0, 0.0], &ModeOptions::default()).unwrap();
    assert!(mode.grad_norm() <= 1e-5);
    let h = DMatrix::from_fn(2, 2, |i, j| mode.hessian[i][j]);
    assert!(h.symmetric_eigenvalues().iter().all(|&l| l < 0.0));

    let cell = 0.02;
    let mut best = (0.0, 0.0, f64::NEG_INFINITY);
    for i in -75..=75 {
        for j in -75..=75 {
            let x = [mode.x[0] + i as f64 * cell, mode.x[1] + j as f64 * cell];
            let v = obj.log_density(&x).unwrap();
            if v > best.2 {
                best = (x[0], x[1], v);
            }
        }
    }
    assert!((mode.x[0] - best.0).abs() <= cell && (mode.x[1] - best.1).abs() <= cell);
}

#[test]
fn non_convergence_reports_trajectory() {
    let model = two_slot_model(8);
    let obj = HyperObjective::new(&model, &[0.0, 0.0]).unwrap();
    let opts = ModeOptions { max_iter: 1, ..Default::default() };
    match find_mode(&obj, &[-6.0, 6.0], &opts) {
        Err(InlaError::NonConvergence { iterations, trajectory, .. }) => {
            assert_eq!(iterations, 1);
            assert!(!trajectory.is_empty());
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn finite_difference_gradient_is_richardson_consistent() {
    let model = two_slot_model(2);
    let obj = HyperObjective::new(&model, &[0.0, 0.0]).unwrap();
    for x in [[0.3, -0.2], [1.0, 0.5], [-0.5, 1.5]] {
        let g1 = fd_gradient(&obj, &x, 1e-3).unwrap();
        let g2 = fd_gradient(&obj, &x, 5e-4).unwrap();
        for k in 0..2 {
            let richardson = (4.0 * g2[k] - g1[k]) / 3.0;
            assert!((g2[k] - richardson).abs() <= 1e-4 * richardson.abs().max(1e-3), "{g1:?} {g2:?}");
        }
    }
}

struct Quadratic {
    center: Vec<f64>,
    precision: DMatrix<f64>,
}

impl LogDensity for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn log_density(&self, x: &[f64]) -> inla::Result<f64> {
        let d = DVector::from_iterator(x.len(), x.iter().zip(&self.center).map(|(a, b)| a - b));
        Ok(-0.5 * d.dot(&(&self.precision * &d)))
    }
}

impl Quadratic {
    fn hessian(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|i| (0..self.dim()).map(|j| -self.precision[(i, j)]).collect()).collect()
    }
}

#[test]
fn gaussian_grid_mean_is_the_mode() {
    let f = Quadratic { center: vec![1.3, -0.4], precision: DMatrix::from_row_slice(2, 2, &[3.0, 1.2, 1.2, 1.0]) };
    let g = explore_grid(&f, &f.center, &f.hessian(), &GridOptions::default()).unwrap();
    let w = g.normalized_weights();
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    for k in 0..2 {
        let mean: f64 = g.points.iter().zip(&w).map(|(p, w)| w * p.x[k]).sum();
        assert!((mean - f.center[k]).abs() < 1e-6);
    }
    assert!(g.points.iter().any(|p| p.lattice.iter().all(|&z| z == 0)));
    assert!(g.points.iter().all(|p| p.log_density >= -2.5 - 1e-12));
    assert!(!g.axis_scan_fallback);
}

#[test]
fn degenerate_hessian_falls_back_to_axis_scans() {
    let f = Quadratic { center: vec![0.0, 0.0], precision: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]) };
    let g = explore_grid(&f, &f.center, &f.hessian(), &GridOptions::default()).unwrap();
    assert!(g.axis_scan_fallback);
    assert!(g.points.iter().all(|p| p.lattice.iter().filter(|&&z| z != 0).count() <= 1));
}

struct Separable;

impl LogDensity for Separable {
    fn dim(&self) -> usize {
        2
    }
    fn log_density(&self, x: &[f64]) -> inla::Result<f64> {
        Ok(-0.5 * (x[0] / 0.8).powi(2) - 0.25 * (x[1] / 1.7).powi(4) - 0.5 * (x[1] / 1.7).powi(2))
    }
}

#[test]
fn product_form_marginal_is_its_factor() {
    let hessian = vec![vec![-1.0 / 0.64, 0.0], vec![0.0, -1.0 / 2.89]];
    let opts = GridOptions { drop_threshold: 1e3, ..Default::default() };
    let g = explore_grid(&Separable, &[0.0, 0.0], &hessian, &opts).unwrap();
    assert_eq!(g.points.len(), 121);
    let marg = marginal_hyperparameter(&g, 0).unwrap();
    assert_eq!(marg.len(), 11);
    let factor: Vec<f64> = (-5..=5).map(|k| (-0.5 * (k as f64 * 0.75).powi(2)).exp()).collect();
    let total: f64 = factor.iter().sum();
    for ((v, m), (k, f)) in marg.iter().zip((-5..=5).zip(&factor)) {
        assert!((v - k as f64 * 0.75 * 0.8).abs() < 1e-12);
        assert!((m - f / total).abs() < 1e-12);
    }
    assert!((marg.iter().map(|p| p.1).sum::<f64>() - 1.0).abs() < 1e-12);
}

/// Total variation between a binned grid marginal and brute-force quadrature
/// of `log_density` over the same bins on `[lo, hi]`.
fn binned_total_variation(marg: &[(f64, f64)], width: f64, lo: f64, hi: f64, log_density: impl Fn(f64) -> f64) -> f64 {
    let n = 200_000;
    let h = (hi - lo) / n as f64;
    let xs: Vec<f64> = (0..n).map(|i| lo + (i as f64 + 0.5) * h).collect();
    let lds: Vec<f64> = xs.iter().map(|&x| log_density(x)).collect();
    let max = lds.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let dens: Vec<f64> = lds.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = dens.iter().sum();
    let mut oracle = vec![0.0; marg.len()];
    let mut outside = 0.0;
    for (x, d) in xs.iter().zip(&dens) {
        match marg.iter().position(|(v, _)| (x - v).abs() <= width / 2.0) {
            Some(b) => oracle[b] += d / total,
            None => outside += d / total,
        }
    }
    0.5 * (marg.iter().zip(&oracle).map(|((_, m), o)| (m - o).abs()).sum::<f64>() + outside)
}

#[test]
fn correlated_gaussian_marginal_matches_quadrature() {
    let p = DMatrix::from_row_slice(2, 2, &[2.0, 1.1, 1.1, 1.5]);
    let f = Quadratic { center: vec![0.5, -1.0], precision: p.clone() };
    let opts = GridOptions { drop_threshold: 6.0, ..Default::default() };
    let g = explore_grid(&f, &f.center, &f.hessian(), &opts).unwrap();
    let cov = p.try_inverse().unwrap();
    for k in 0..2 {
        let marg = marginal_hyperparameter(&g, k).unwrap();
        let sd = cov[(k, k)].sqrt();
        let width = 0.75 * g.axis_scale(k);
        assert!((g.axis_scale(k) - sd).abs() < 1e-12);
        let c = f.center[k];
        let tv = binned_total_variation(&marg, width, c - 8.0 * sd, c + 8.0 * sd, |x| -0.5 * ((x - c) / sd).powi(2));
        assert!(tv <= 0.02, "coordinate {k}: total variation {tv}");
    }
}

const LEVELS: usize = 10;

/// Intercept + 10-level iid effect with fixed noise: one free hyperparameter.
/// The group signal is strong enough that the precision is identified away
/// from the prior's long right tail.
fn one_slot_model(seed: u64) -> (LatentGaussianModel, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let effects: Vec<f64> = (0..LEVELS).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
    let levels: Vec<usize> = (0..50).map(|s| s % LEVELS).collect();
    let y: Vec<f64> = levels.iter().map(|&l| 2.0 + effects[l] + rng.sample::<f64, _>(StandardNormal)).collect();
    let mut b = ModelBuilder::new(y);
    b.add_noise_slot(HyperPrior::Fixed { log_precision: 0.0 });
    let s = b.add_slot("group", HyperPrior::default());
    b.add_intercept();
    b.add_block(EffectBlock::iid("group", LEVELS, levels.clone(), None, s));
    (b.build().unwrap(), levels)
}

/// Dense closed forms for the one-slot model at log precision `psi`.
struct OneSlotOracle {
    a: DMatrix<f64>,
    y: DVector<f64>,
}

impl OneSlotOracle {
    fn new(model: &LatentGaussianModel, levels: &[usize]) -> Self {
        let n = levels.len();
        let a = DMatrix::from_fn(n, LEVELS + 1, |s, j| if j == 0 || j == levels[s] + 1 { 1.0 } else { 0.0 });
        Self { a, y: DVector::from_column_slice(model.y()) }
    }

    fn prior_cov(&self, psi: f64) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(LEVELS + 1, (0..=LEVELS).map(|j| if j == 0 { 1e6 } else { (-psi).exp() })))
    }

    fn log_post(&self, psi: f64) -> f64 {
        let n = self.y.len();
        let v = &self.a * self.prior_cov(psi) * self.a.transpose() + DMatrix::identity(n, n);
        common::log_normal_density(&self.y, &v) + oracle_log_prior(psi)
    }

    fn conditional(&self, psi: f64, j: usize) -> (f64, f64) {
        let q = self.prior_cov(psi).map(|v| if v > 0.0 { 1.0 / v } else { 0.0 }) + self.a.transpose() * &self.a;
        let sigma = q.cholesky().unwrap().inverse();
        let mean = &sigma * self.a.transpose() * &self.y;
        (mean[j], sigma[(j, j)])
    }
}

#[test]
fn one_dimensional_hyperparameter_marginal_matches_quadrature() {
    let (model, levels) = one_slot_model(4);
    let oracle = OneSlotOracle::new(&model, &levels);
    let config = InlaConfig { grid: GridOptions { drop_threshold: 6.0, ..Default::default() }, ..Default::default() };
    let f = fit(&model, &config, None).unwrap();
    let marg = f.marginal_hyperparameter(1).unwrap();
    let sd = f.grid().axis_scale(0);
    let c = f.mode_psi()[1];
    let tv = binned_total_variation(&marg, 0.75 * sd, c - 10.0 * sd, c + 10.0 * sd, |x| oracle.log_post(x));
    assert!(tv <= 0.02, "total variation {tv}");
}

#[test]
fn latent_mixture_moments_match_quadrature() {
    let (model, levels) = one_slot_model(4);
    let oracle = OneSlotOracle::new(&model, &levels);
    let f = fit(&model, &InlaConfig::default(), None).unwrap();
    let c = f.mode_psi()[1];
    let sd = f.grid().axis_scale(0);
    let (lo, hi, n) = (c - 8.0 * sd, c + 8.0 * sd, 2000);
    let h = (hi - lo) / n as f64;
    let psis: Vec<f64> = (0..n).map(|i| lo + (i as f64 + 0.5) * h).collect();
    let lp: Vec<f64> = psis.iter().map(|&p| oracle.log_post(p)).collect();
    let max = lp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lp.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    for j in [0, 1, 4] {
        let (mut m1, mut m2) = (0.0, 0.0);
        for (p, wi) in psis.iter().zip(&w) {
            let (mu, var) = oracle.conditional(*p, j);
            m1 += wi / total * mu;
            m2 += wi / total * (var + mu * mu);
        }
        let osd = (m2 - m1 * m1).sqrt();
        let m = f.marginal_latent(j).unwrap();
        assert!((m.mean() - m1).abs() <= 0.02 * m1.abs().max(osd), "mean {j}: {} vs {m1}", m.mean());
        assert!((m.sd() / osd - 1.0).abs() <= 0.02, "sd {j}: {} vs {osd}", m.sd());
    }
    let wsum: f64 = f.weights().iter().sum();
    assert!((wsum - 1.0).abs() < 1e-12);
}

#[test]
fn mixture_quantiles_match_monte_carlo() {
    let comps = vec![
        MixtureComponent { mean: -1.0, sd: 0.4, weight: 0.25 },
        MixtureComponent { mean: 0.8, sd: 1.1, weight: 0.5 },
        MixtureComponent { mean: 3.2, sd: 0.3, weight: 0.25 },
    ];
    let m = MixtureMarginal::new(comps.clone(), Scale::Natural).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 1_000_000;
    let mut draws: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            let c = if u < 0.25 { &comps[0] } else if u < 0.75 { &comps[1] } else { &comps[2] };
            c.mean + c.sd * rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    draws.sort_by(f64::total_cmp);
    let pdf = |x: f64| -> f64 {
        comps
            .iter()
            .map(|c| c.weight * (-0.5 * ((x - c.mean) / c.sd).powi(2)).exp() / (c.sd * (2.0 * std::f64::consts::PI).sqrt()))
            .sum()
    };
    for p in [0.025, 0.1, 0.25, 0.5, 0.75, 0.9, 0.975] {
        let q = m.quantile(p).unwrap();
        let emp = draws[(p * n as f64) as usize];
        let se = (p * (1.0 - p) / n as f64).sqrt() / pdf(q);
        assert!((q - emp).abs() <= 3.0 * se, "p = {p}: {q} vs {emp} (se {se})");
    }
    let hw = m.ci95_halfwidth().unwrap();
    assert!((hw - (m.quantile(0.975).unwrap() - m.quantile(0.025).unwrap()) / 2.0).abs() < 1e-15);
}

#[test]
fn log_scale_exceedance_is_a_weighted_normal_tail() {
    let comps = vec![MixtureComponent { mean: 3.0, sd: 0.5, weight: 0.3 }, MixtureComponent { mean: 4.0, sd: 0.2, weight: 0.7 }];
    let m = MixtureMarginal::new(comps.clone(), Scale::Log).unwrap();
    for t in [10.0, 35.0, 75.0] {
        let oracle: f64 =
            comps.iter().map(|c| c.weight * (1.0 - SNormal::new(c.mean, c.sd).unwrap().cdf(f64::ln(t)))).sum();
        assert!((m.exceed_prob(t).unwrap() - oracle).abs() < 1e-12);
    }
}

#[test]
fn dic_of_saturated_model_has_no_effective_parameters() {
    let y = vec![1.0, -0.5, 2.5];
    let mut b = ModelBuilder::new(y.clone());
    b.add_noise_slot(HyperPrior::Fixed { log_precision: 0.3 });
    b.set_offset(y);
    let model = b.build().unwrap();
    assert_eq!(model.theta_dim(), 0);
    let f = fit(&model, &InlaConfig::default(), None).unwrap();
    let dic = f.dic().unwrap();
    assert!(dic.effective_parameters.abs() < 1e-12);
    let tau = 0.3f64.exp();
    let d = 3.0 * (2.0 * std::f64::consts::PI / tau).ln();
    assert!((dic.dic - d).abs() < 1e-12);
}

#[test]
fn conjugate_dic_matches_monte_carlo() {
    let y = vec![0.4, 1.9, 1.1, 0.7, 2.3, 1.5, 0.2, 1.0];
    let (tau_e, tau_t) = (2.0f64, 0.5f64);
    let mut b = ModelBuilder::new(y.clone());
    b.add_noise_slot(HyperPrior::Fixed { log_precision: tau_e.ln() });
    let s = b.add_slot("theta", HyperPrior::Fixed { log_precision: tau_t.ln() });
    b.add_block(EffectBlock::iid("theta", 1, vec![0; y.len()], None, s));
    let model = b.build().unwrap();
    let dic = fit(&model, &InlaConfig::default(), None).unwrap().dic().unwrap();

    let n = y.len() as f64;
    let post_prec = tau_t + n * tau_e;
    let post_mean = tau_e * y.iter().sum::<f64>() / post_prec;
    let deviance = |t: f64| -> f64 {
        n * (2.0 * std::f64::consts::PI / tau_e).ln() + tau_e * y.iter().map(|v| (v - t).powi(2)).sum::<f64>()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let draws = 100_000;
    let normal = Normal::new(post_mean, 1.0 / post_prec.sqrt()).unwrap();
    let ds: Vec<f64> = (0..draws).map(|_| deviance(normal.sample(&mut rng))).collect();
    let dbar = ds.iter().sum::<f64>() / draws as f64;
    let var = ds.iter().map(|d| (d - dbar).powi(2)).sum::<f64>() / (draws - 1) as f64;
    // DIC = 2 D̄ − D(θ̄); the plug-in term is exact, so the error is 2× that of D̄.
    let mc_dic = 2.0 * dbar - deviance(post_mean);
    let se = 2.0 * (var / draws as f64).sqrt();
    assert!((dic.dic - mc_dic).abs() <= 3.0 * se, "{} vs {mc_dic} (se {se})", dic.dic);
    assert!((dic.effective_parameters - n * tau_e / post_prec).abs() < 1e-9);
}

#[test]
fn richer_model_has_lower_mean_deviance() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let n = 120;
    let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let levels: Vec<usize> = (0..n).map(|s| s % 6).collect();
    let effects: Vec<f64> = (0..6).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let y: Vec<f64> = (0..n).map(|s| 1.0 + 0.8 * x[s] + effects[levels[s]] + 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();

    let mut small = ModelBuilder::new(y.clone());
    small.add_noise_slot(HyperPrior::default());
    small.add_intercept();
    let mut rich = ModelBuilder::new(y);
    rich.add_noise_slot(HyperPrior::default());
    let s = rich.add_slot("group", HyperPrior::default());
    rich.add_intercept().add_fixed("x", x);
    rich.add_block(EffectBlock::iid("group", 6, levels, None, s));
    let d_small = fit(&small.build().unwrap(), &InlaConfig::default(), None).unwrap().dic().unwrap();
    let d_rich = fit(&rich.build().unwrap(), &InlaConfig::default(), None).unwrap().dic().unwrap();
    assert!(d_rich.mean_deviance < d_small.mean_deviance);
    assert!(d_rich.effective_parameters > d_small.effective_parameters);
}

proptest! {
    #[test]
    fn exceedance_is_nonincreasing(
        comps in proptest::collection::vec((-3.0f64..5.0, 0.01f64..2.0, 0.01f64..1.0), 1..6),
        t1 in 0.01f64..200.0,
        dt in 0.0f64..100.0,
    ) {
        let comps: Vec<MixtureComponent> = comps.into_iter().map(|(mean, sd, weight)| MixtureComponent { mean, sd, weight }).collect();
        for scale in [Scale::Log, Scale::Natural] {
            let m = MixtureMarginal::new(comps.clone(), scale).unwrap();
            prop_assert!(m.exceed_prob(t1 + dt).unwrap() <= m.exceed_prob(t1).unwrap());
        }
        let m = MixtureMarginal::new(comps, Scale::Natural).unwrap();
        let w: f64 = m.components().iter().map(|c| c.weight).sum();
        prop_assert!((w - 1.0).abs() < 1e-12);
    }
}

