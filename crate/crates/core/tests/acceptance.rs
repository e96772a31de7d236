//! Acceptance suite: one PASS/FAIL line per criterion, each checked against
//! an oracle that is independent of the code under test. Runs as a plain
//! binary (no libtest harness) and exits non-zero if any criterion fails.

#[path = "../../inla/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{random_model, Options};
use dimaq::convert::convert_dataset;
use dimaq::evaluation::{compute_metrics, cross_validate, stratified_split, CvOptions, SplitPlan};
use dimaq::model::TreeEffect;
use dimaq::prediction::CellPosterior;
use dimaq::simulate::{simulate_world, SimulatedWorld, WorldConfig};
use dimaq::{fit_variant, predict_cells, Dataset, FitOptions, ModelSpec, PredictionOptions, Variant};
use gmrf::{build_icar_precision, AdjacencyGraph, SparsePrecision};
use inla::{fit, log_hyper_posterior, EffectBlock, GridOptions, HyperPrior, InlaConfig, LatentGaussianModel, ModelBuilder};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64, what: &str) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || format!("{what} took {:.1} s (limit {limit_s} s)", elapsed.as_secs_f64()))
}

fn reference_world(seed: u64) -> (SimulatedWorld, Dataset) {
    let world = simulate_world(&WorldConfig::default(), seed).expect("reference world");
    let data = convert_dataset(&world.data).expect("conversion");
    (world, data)
}

// ---------------------------------------------------------------------------

fn conjugate_exactness() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut models = 0;
    for (seed, n_obs, icar) in [(1u64, 30, false), (2, 60, true), (3, 120, false), (4, 200, true), (5, 200, false)] {
        let dm = random_model(seed, &Options { icar, n_obs, ..Default::default() });
        ensure(dm.theta_dim() <= 100, || format!("θ-dim {} exceeds 100", dm.theta_dim()))?;
        let f = fit(&dm.model, &InlaConfig::default(), None).map_err(|e| e.to_string())?;
        let (mean, cov) = dm.posterior(&dm.psi);
        for j in 0..dm.theta_dim() {
            let m = f.marginal_latent(j).map_err(|e| e.to_string())?;
            worst = worst.max((m.mean() - mean[j]).abs()).max((m.sd() - cov[(j, j)].sqrt()).abs());
        }
        models += 1;
    }
    let elapsed = start.elapsed();
    ensure(worst <= 1e-8, || format!("max |Δ| {worst:.2e} > 1e-8"))?;
    within(elapsed, 1.0, "conjugate fits")?;
    Ok(format!("{models} models, max |Δ mean|,|Δ sd| = {worst:.1e}, {:.2} s", elapsed.as_secs_f64()))
}

fn marginal_likelihood_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let dm = random_model(500 + seed, &Options { icar: seed % 2 == 0, fixed_hyper: false, ..Default::default() });
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let psi: Vec<f64> = dm.psi.iter().map(|p| p + rng.gen_range(-1.0..1.0)).collect();
        let lhp = log_hyper_posterior(&dm.model, &psi).map_err(|e| e.to_string())?;
        let oracle = dm.log_marginal_likelihood(&psi);
        worst = worst.max((lhp - dm.model.log_hyper_prior(&psi) - oracle).abs());
    }
    let elapsed = start.elapsed();
    ensure(worst <= 1e-6, || format!("max |Δ| {worst:.2e} > 1e-6"))?;
    within(elapsed, 5.0, "20 models")?;
    Ok(format!("20 models, max |Δ log p(y|ψ)| = {worst:.1e}, {:.2} s", elapsed.as_secs_f64()))
}

// One free hyperparameter: intercept plus a 10-level iid group effect with
// known noise, 50 observations.
const LEVELS: usize = 10;

fn one_slot_model() -> (LatentGaussianModel, DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let effects: Vec<f64> = (0..LEVELS).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
    let levels: Vec<usize> = (0..50).map(|s| s % LEVELS).collect();
    let y: Vec<f64> = levels.iter().map(|&l| 2.0 + effects[l] + rng.sample::<f64, _>(StandardNormal)).collect();
    let mut b = ModelBuilder::new(y.clone());
    b.add_noise_slot(HyperPrior::Fixed { log_precision: 0.0 });
    let s = b.add_slot("group", HyperPrior::default());
    b.add_intercept();
    b.add_block(EffectBlock::iid("group", LEVELS, levels.clone(), None, s));
    let a = DMatrix::from_fn(50, LEVELS + 1, |r, j| if j == 0 || j == levels[r] + 1 { 1.0 } else { 0.0 });
    (b.build().unwrap(), a, DVector::from_vec(y))
}

fn prior_cov(psi: f64) -> DMatrix<f64> {
    let fixed_var = 1.0 / inla::DEFAULT_FIXED_PRECISION;
    DMatrix::from_diagonal(&DVector::from_iterator(
        LEVELS + 1,
        (0..=LEVELS).map(|j| if j == 0 { fixed_var } else { (-psi).exp() }),
    ))
}

/// Unnormalized log posterior of the group log-precision: Gaussian marginal
/// likelihood with the dense covariance plus the Gamma(1, 5e-5) prior.
fn oracle_log_post(a: &DMatrix<f64>, y: &DVector<f64>, psi: f64) -> f64 {
    let v = a * prior_cov(psi) * a.transpose() + DMatrix::identity(y.len(), y.len());
    let b: f64 = 5e-5;
    common::log_normal_density(y, &v) + b.ln() + psi - b * psi.exp()
}

fn oracle_conditional(a: &DMatrix<f64>, y: &DVector<f64>, psi: f64, j: usize) -> (f64, f64) {
    let q = DMatrix::from_diagonal(&prior_cov(psi).diagonal().map(|v| 1.0 / v)) + a.transpose() * a;
    let sigma = q.cholesky().expect("posterior precision is positive definite").inverse();
    let mean = &sigma * a.transpose() * y;
    (mean[j], sigma[(j, j)])
}

fn quadrature_oracle() -> Outcome {
    let start = Instant::now();
    let (model, a, y) = one_slot_model();
    // Hyperparameter marginal: lattice masses against brute-force quadrature
    // over the same bins.
    let config = InlaConfig { grid: GridOptions { drop_threshold: 6.0, ..Default::default() }, ..Default::default() };
    let f = fit(&model, &config, None).map_err(|e| e.to_string())?;
    let marg = f.marginal_hyperparameter(1).map_err(|e| e.to_string())?;
    let sd = f.grid().axis_scale(0);
    let width = config.grid.step * sd;
    let c = f.mode_psi()[1];
    let (lo, hi, n) = (c - 10.0 * sd, c + 10.0 * sd, 200_000);
    let h = (hi - lo) / n as f64;
    let xs: Vec<f64> = (0..n).map(|i| lo + (i as f64 + 0.5) * h).collect();
    let lds: Vec<f64> = xs.iter().map(|&x| oracle_log_post(&a, &y, x)).collect();
    let max = lds.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let dens: Vec<f64> = lds.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = dens.iter().sum();
    let mut binned = vec![0.0; marg.len()];
    let mut outside = 0.0;
    for (x, d) in xs.iter().zip(&dens) {
        match marg.iter().position(|(v, _)| (x - v).abs() <= width / 2.0) {
            Some(b) => binned[b] += d / total,
            None => outside += d / total,
        }
    }
    let tv = 0.5 * (marg.iter().zip(&binned).map(|((_, m), o)| (m - o).abs()).sum::<f64>() + outside);
    ensure(tv <= 0.02, || format!("hyperparameter total variation {tv:.4} > 0.02"))?;

    // Latent marginals (default lattice) against 2-D quadrature over (ψ, θ_j).
    let f = fit(&model, &InlaConfig::default(), None).map_err(|e| e.to_string())?;
    let (lo, hi, n) = (c - 8.0 * sd, c + 8.0 * sd, 2000);
    let h = (hi - lo) / n as f64;
    let psis: Vec<f64> = (0..n).map(|i| lo + (i as f64 + 0.5) * h).collect();
    let lp: Vec<f64> = psis.iter().map(|&p| oracle_log_post(&a, &y, p)).collect();
    let max = lp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lp.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut worst: f64 = 0.0;
    for j in [0, 1, 4, 9] {
        let (mut m1, mut m2) = (0.0, 0.0);
        for (p, wi) in psis.iter().zip(&w) {
            let (mu, var) = oracle_conditional(&a, &y, *p, j);
            m1 += wi / total * mu;
            m2 += wi / total * (var + mu * mu);
        }
        let osd = (m2 - m1 * m1).sqrt();
        let m = f.marginal_latent(j).map_err(|e| e.to_string())?;
        let dm = (m.mean() - m1).abs() / m1.abs().max(osd);
        let ds = (m.sd() / osd - 1.0).abs();
        worst = worst.max(dm).max(ds);
    }
    let elapsed = start.elapsed();
    ensure(worst <= 0.02, || format!("latent moment relative error {worst:.4} > 2%"))?;
    within(elapsed, 30.0, "quadrature checks")?;
    Ok(format!("TV {tv:.4}, latent moments within {:.2}%, {:.1} s", 100.0 * worst, elapsed.as_secs_f64()))
}

fn synthetic_recovery() -> Outcome {
    let spec = ModelSpec::for_variant(Variant::Ii);
    let mut covered: BTreeMap<String, usize> = BTreeMap::new();
    let mut slowest: f64 = 0.0;
    const REPLICATES: u64 = 20;
    for r in 0..REPLICATES {
        let (world, data) = reference_world(1000 + r);
        let start = Instant::now();
        let fitted = fit_variant(&spec, &data, &FitOptions::default()).map_err(|e| format!("replicate {r}: {e}"))?;
        slowest = slowest.max(start.elapsed().as_secs_f64());
        let raw = fitted.raw_fixed_effects().map_err(|e| e.to_string())?;
        for (name, s) in raw {
            let truth = world.truth.fixed_raw[&name];
            *covered.entry(name).or_default() += s.covers(truth) as usize;
        }
    }
    let summary = covered.iter().map(|(k, v)| format!("{k} {v}")).collect::<Vec<_>>().join(", ");
    let low: Vec<&String> = covered.iter().filter(|(_, &v)| v < 16).map(|(k, _)| k).collect();
    ensure(low.is_empty(), || format!("coverage below 16/{REPLICATES} for {low:?} ({summary})"))?;
    ensure(slowest < 60.0, || format!("slowest fit {slowest:.1} s ≥ 60 s"))?;
    Ok(format!("95% intervals covering truth (of {REPLICATES}): {summary}; slowest fit {slowest:.1} s"))
}

fn mean_sd(posteriors: &[CellPosterior]) -> f64 {
    posteriors.iter().map(|p| p.summary.sd).sum::<f64>() / posteriors.len() as f64
}

fn hierarchy_borrowing() -> Outcome {
    let (_, data) = reference_world(7);
    let spec = ModelSpec::for_variant(Variant::Ii);
    // The country with the most monitors.
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for m in &data.monitors {
        *counts.entry(&m.country_id).or_default() += 1;
    }
    let (&target, &n_removed) = counts.iter().max_by_key(|(_, &n)| n).unwrap();
    let reduced = data
        .with_monitors(data.monitors.iter().filter(|m| m.country_id != target).cloned().collect())
        .map_err(|e| e.to_string())?;
    let full_fit = fit_variant(&spec, &data, &FitOptions::default()).map_err(|e| e.to_string())?;
    let reduced_fit = fit_variant(&spec, &reduced, &FitOptions::default()).map_err(|e| e.to_string())?;

    let model = &reduced_fit.model;
    let c = model.country_index(target).unwrap();
    let mean = reduced_fit.fit.posterior_mean();
    let mut worst: f64 = 0.0;
    let mut effects = vec![TreeEffect::Intercept];
    effects.extend(spec.tree_slopes().into_iter().map(TreeEffect::Slope));
    for e in &effects {
        let (full, region) = model.composed_rows(*e, c).ok_or("composed rows missing")?;
        worst = worst.max((full.dot(&mean) - region.dot(&mean)).abs());
    }
    ensure(worst <= 1e-8, || format!("composed country mean differs from region composition by {worst:.2e}"))?;

    let cells: Vec<_> = data.cells.iter().filter(|c| c.country_id == target).cloned().collect();
    let options = PredictionOptions::default();
    let before = mean_sd(&predict_cells(&full_fit, &cells, &options).map_err(|e| e.to_string())?);
    let after = mean_sd(&predict_cells(&reduced_fit, &cells, &options).map_err(|e| e.to_string())?);
    ensure(after > before, || format!("mean predictive sd did not increase: {before:.3} → {after:.3}"))?;
    Ok(format!(
        "country {target} ({n_removed} monitors removed): |country − region| = {worst:.1e} over {} effects; mean predictive sd {before:.2} → {after:.2} µg/m³",
        effects.len()
    ))
}

fn cv_direction() -> Outcome {
    let (_, data) = reference_world(2024);
    let start = Instant::now();
    let table = cross_validate(&data, &[Variant::I, Variant::Ii], &CvOptions::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(table.failures() == 0, || format!("{} split fits failed", table.failures()))?;
    let get = |v, m| table.summary(v, m).map(|s| s.median).ok_or(format!("no {m} for {v}"));
    let (rmse_i, rmse_ii) = (get(Variant::I, "rmse")?, get(Variant::Ii, "rmse")?);
    let (pw_i, pw_ii) = (get(Variant::I, "pwrmse")?, get(Variant::Ii, "pwrmse")?);
    ensure(rmse_ii < rmse_i, || format!("median RMSE (ii) {rmse_ii:.2} ≥ (i) {rmse_i:.2}"))?;
    ensure(pw_ii < pw_i, || format!("median PwRMSE (ii) {pw_ii:.2} ≥ (i) {pw_i:.2}"))?;
    within(elapsed, 600.0, "cross-validation")?;
    Ok(format!(
        "25 splits: median RMSE (i) {rmse_i:.2} → (ii) {rmse_ii:.2}; median PwRMSE (i) {pw_i:.2} → (ii) {pw_ii:.2}; {:.0} s",
        elapsed.as_secs_f64()
    ))
}

fn chunk_invariance() -> Outcome {
    let (_, data) = reference_world(7);
    let fitted = fit_variant(&ModelSpec::for_variant(Variant::Ii), &data, &FitOptions::default()).map_err(|e| e.to_string())?;
    let run = |chunk_size| {
        predict_cells(&fitted, &data.cells, &PredictionOptions { chunk_size, ..Default::default() }).map_err(|e| e.to_string())
    };
    let reference = run(0)?;
    let mut worst: f64 = 0.0;
    for size in [1, 64] {
        let other = run(size)?;
        ensure(other.len() == reference.len(), || "cell counts differ".into())?;
        for (a, b) in reference.iter().zip(&other) {
            ensure(a.cell_id == b.cell_id, || "cell order differs".into())?;
            let (s, t) = (&a.summary, &b.summary);
            let mut fields = vec![(s.median, t.median), (s.mean, t.mean), (s.sd, t.sd), (s.ci95_halfwidth, t.ci95_halfwidth)];
            fields.extend(s.exceed.iter().copied().zip(t.exceed.iter().copied()));
            for (x, y) in fields {
                worst = worst.max((x - y).abs());
            }
        }
    }
    ensure(worst <= 1e-8, || format!("max difference {worst:.2e} > 1e-8"))?;
    Ok(format!("{} cells, chunk sizes 1, 64, all: max difference {worst:.1e}", reference.len()))
}

/// Full conditional of node `i` recovered from the joint density alone.
fn brute_force_conditional(q: &SparsePrecision, x: &[f64], i: usize) -> (f64, f64) {
    let energy = |t: f64| {
        let mut z = x.to_vec();
        z[i] = t;
        -0.5 * q.quad_form(&z).unwrap()
    };
    let (f0, fp, fm) = (energy(0.0), energy(1.0), energy(-1.0));
    let precision = -(fp + fm - 2.0 * f0);
    ((fp - fm) / 2.0 / precision, 1.0 / precision)
}

fn icar_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let mut graphs_checked = 0;
    for n in 2..=6 {
        let mut graphs = vec![AdjacencyGraph::from_edges(n, (0..n - 1).map(|i| (i, i + 1))).map_err(|e| e.to_string())?];
        if n >= 3 {
            graphs.push(AdjacencyGraph::from_edges(n, (0..n).map(|i| (i, (i + 1) % n))).map_err(|e| e.to_string())?);
        }
        for g in graphs {
            let scale = rng.gen_range(0.2..3.0);
            let q = build_icar_precision(&g, scale).map_err(|e| e.to_string())?;
            for row in q.to_dense() {
                let s: f64 = row.iter().sum();
                ensure(s == 0.0, || format!("row sum {s:e} on n = {n}"))?;
            }
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            for i in 0..n {
                let (mean, var) = brute_force_conditional(&q, &x, i);
                let nb = g.neighbors(i);
                let neighbor_mean = nb.iter().map(|&j| x[j]).sum::<f64>() / nb.len() as f64;
                worst = worst.max((mean - neighbor_mean).abs()).max((var - scale / nb.len() as f64).abs());
            }
            graphs_checked += 1;
        }
    }
    ensure(worst <= 1e-10, || format!("max conditional error {worst:.2e} > 1e-10"))?;
    Ok(format!("{graphs_checked} path/cycle graphs, max error {worst:.1e}, row sums exactly 0"))
}

fn metric_arithmetic() -> Outcome {
    let m = compute_metrics(&[10.0, 20.0], &[12.0, 16.0], &[1.0, 3.0]).map_err(|e| e.to_string())?;
    ensure(m.rmse == 10f64.sqrt(), || format!("rmse {} ≠ √10", m.rmse))?;
    ensure(m.pwrmse == 13f64.sqrt(), || format!("pwrmse {} ≠ √13", m.pwrmse))?;
    let perfect = compute_metrics(&[5.0, 7.0, 9.0], &[5.0, 7.0, 9.0], &[1.0, 2.0, 3.0]).map_err(|e| e.to_string())?;
    ensure(perfect.rmse == 0.0 && perfect.r2 == 1.0, || format!("perfect predictions gave {perfect:?}"))?;
    let uniform = compute_metrics(&[1.0, 4.0, 2.0], &[2.0, 2.0, 5.0], &[3.0, 3.0, 3.0]).map_err(|e| e.to_string())?;
    ensure(uniform.pwrmse == uniform.rmse, || format!("uniform weights: {} vs {}", uniform.pwrmse, uniform.rmse))?;
    ensure(compute_metrics(&[1.0], &[2.0], &[0.0]).is_err(), || "zero population accepted".into())?;

    // Four strata of 10, 20, 30 and 40 monitors: validation holds exactly
    // 2, 4, 6 and 8, for every split.
    let keys: Vec<(usize, usize)> = (0..4).flat_map(|s| std::iter::repeat_n((s, 0), 10 * (s + 1))).collect();
    let plan = SplitPlan::default();
    for split in 0..plan.n_splits {
        let (train, validation) = stratified_split(&keys, &plan, split).map_err(|e| e.to_string())?;
        ensure(train.len() + validation.len() == keys.len(), || "split is not exhaustive".into())?;
        for s in 0..4 {
            let k = validation.iter().filter(|&&i| keys[i].0 == s).count();
            ensure(k == 2 * (s + 1), || format!("split {split}, stratum {s}: {k} validation monitors"))?;
        }
    }
    let ten = vec![(0, 0); 10];
    ensure(stratified_split(&ten, &plan, 0).map_err(|e| e.to_string())?.1.len() == 2, || "10 → 2 failed".into())?;
    Ok("hand-computed rmse √10, pwrmse √13, perfect and uniform cases exact; 20% per stratum over 25 splits".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("conjugate exactness", conjugate_exactness),
        ("marginal-likelihood oracle", marginal_likelihood_oracle),
        ("quadrature oracle", quadrature_oracle),
        ("synthetic recovery", synthetic_recovery),
        ("hierarchy borrowing", hierarchy_borrowing),
        ("cross-validation direction", cv_direction),
        ("chunk invariance", chunk_invariance),
        ("ICAR correctness", icar_correctness),
        ("metric arithmetic", metric_arithmetic),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
