use std::collections::{BTreeMap, BTreeSet};

use sae_core::estimator::plugin_probabilities;
use sae_core::oracle;
use sae_core::rng;
use sae_core::simulation::{
    self, CovariateModel, Design, DomainSizes, EstimatorConfig, Population, PopulationConfig,
};
use sae_core::{
    bootstrap_mse, estimate_headcount, fit, BootstrapConfig, Dataset, DomainId, Error, FitConfig, GlmmFit,
    IndicatorSpec, Level, Role, UnitRecord,
};

fn names(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("y_{i}")).collect()
}

fn spec(missing: &[usize]) -> IndicatorSpec {
    IndicatorSpec::new(vec![0.25; 4], 0.4, missing.iter().copied().collect(), names(4)).unwrap()
}

fn population(d: usize, size: usize, missing: &[usize], seed: u64) -> Population {
    let cfg = PopulationConfig {
        n_domains: d,
        n_departments: 2,
        domain_sizes: DomainSizes::Fixed(size),
        covariates: vec![CovariateModel { mean: 0.0, between_sd: 0.6, within_sd: 1.0 }],
        true_beta: vec![vec![-0.5, 0.8], vec![0.0, -0.5], vec![-0.3, 0.6], vec![-0.8, 0.4]],
        true_sigma_u: vec![0.6; 4],
        spec: spec(missing),
        seed,
    };
    simulation::generate_population(&cfg).unwrap()
}

fn fits_for(sample: &Dataset, spec: &IndicatorSpec) -> BTreeMap<usize, GlmmFit> {
    spec.census_missing().iter().map(|&k| (k, fit(sample, k, &FitConfig::default()).unwrap())).collect()
}

#[test]
fn model_estimates_track_direct_estimates() {
    let sp = spec(&[2, 3]);
    let pop = population(100, 400, &[2, 3], 11);
    let design = Design::StratifiedTwoStage { munis_per_stratum: 50, units_per_muni: 200 };
    let sample = simulation::draw_sample(&pop.data, &design, 12).unwrap();
    let census = pop.data.hide_indicators(sp.census_missing());
    let est = estimate_headcount(&census, &fits_for(&sample, &sp), &sp, 50, 13).unwrap();
    let direct = simulation::direct_headcounts(&sample, &sp, true).unwrap();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for e in est.iter().filter(|e| e.level == Level::Municipality) {
        a.push(e.h_hat);
        b.push(direct[&(Level::Municipality, e.domain.clone())]);
    }
    assert_eq!(a.len(), 100);
    let r = sae_core::math::pearson(&a, &b);
    assert!(r >= 0.8, "pearson r = {r}");
}

#[test]
fn census_as_sample_is_unbiased() {
    let sp = spec(&[3]);
    let pop = population(20, 200, &[3], 21);
    let n = pop.data.len();
    let est = EstimatorConfig { replicates: 400, fit: FitConfig::default() };
    let report = simulation::run_design_simulation(&pop, &Design::Srs { n }, &sp, 2, &est, 22).unwrap();
    // each unit's poverty status has variance at most 1/4
    let sd = 0.5 / (200f64).sqrt();
    let munis: Vec<_> = report.level(Level::Municipality).collect();
    let mean_bias = munis.iter().map(|d| d.bias).sum::<f64>() / munis.len() as f64;
    assert!(mean_bias.abs() <= 3.0 * sd / (munis.len() as f64).sqrt(), "mean bias {mean_bias}");
    for d in &munis {
        assert!(d.bias.abs() <= 4.0 * sd, "{}: bias {}", d.domain, d.bias);
    }
}

#[test]
fn no_missing_indicators_means_no_error() {
    let sp = spec(&[]);
    let pop = population(6, 30, &[], 31);
    let design = Design::StratifiedTwoStage { munis_per_stratum: 2, units_per_muni: 10 };
    let report =
        simulation::run_design_simulation(&pop, &design, &sp, 3, &EstimatorConfig::default(), 32).unwrap();
    assert_eq!(report.failures, 0);
    for d in &report.domains {
        assert_eq!((d.bias, d.rmse), (0.0, 0.0), "{}", d.domain);
        assert!((d.mean_estimate - pop.truth[&(d.level, d.domain.clone())]).abs() < 1e-15);
    }
}

#[test]
fn report_is_reproducible_and_rmse_dominates_bias() {
    let sp = spec(&[2, 3]);
    let pop = population(8, 40, &[2, 3], 41);
    let design = Design::StratifiedTwoStage { munis_per_stratum: 3, units_per_muni: 15 };
    let est = EstimatorConfig { replicates: 20, fit: FitConfig::default() };
    let a = simulation::run_design_simulation(&pop, &design, &sp, 4, &est, 42).unwrap();
    let b = simulation::run_design_simulation(&pop, &design, &sp, 4, &est, 42).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.level(Level::Municipality).count(), 8);
    assert_eq!(a.level(Level::Department).count(), 2);
    for d in &a.domains {
        assert!(d.rmse >= d.bias.abs(), "{}", d.domain);
        assert!(d.mse - d.bias * d.bias >= 0.0);
    }
}

#[test]
fn single_run_rejected() {
    let sp = spec(&[3]);
    let pop = population(4, 10, &[3], 51);
    let r = simulation::run_design_simulation(&pop, &Design::Srs { n: 20 }, &sp, 1, &EstimatorConfig::default(), 1);
    assert!(matches!(r, Err(Error::InvalidConfig(_))));
}

fn degenerate_fit(intercept: f64) -> GlmmFit {
    GlmmFit {
        indicator_name: "y_4".into(),
        beta: vec![intercept, 0.0],
        sigma_u: 0.0,
        u_hat: BTreeMap::new(),
        loglik: 0.0,
        converged: true,
        iterations: 0,
        beta_se: None,
    }
}

#[test]
fn degenerate_model_has_zero_mse() {
    let sp = spec(&[3]);
    let pop = population(6, 20, &[3], 61);
    let sample = simulation::draw_sample(&pop.data, &Design::Srs { n: 40 }, 62).unwrap();
    let census = pop.data.hide_indicators(sp.census_missing());
    for intercept in [-800.0, 800.0] {
        let fits: BTreeMap<usize, GlmmFit> = [(3, degenerate_fit(intercept))].into_iter().collect();
        let cfg = BootstrapConfig { b: 5, l_inner: 3, refit: false, seed: 63 };
        let r = bootstrap_mse(&census, &sample, &fits, &sp, &cfg, &FitConfig::default()).unwrap();
        assert_eq!(r.replicates, 5);
        assert!(r.mse.values().all(|&m| m == 0.0), "{:?}", r.mse);
        assert_eq!(r.mse.len(), 6 + 2);
    }
}

#[test]
fn two_replicates_give_finite_mse_and_are_reproducible() {
    let sp = spec(&[2, 3]);
    let pop = population(6, 40, &[2, 3], 71);
    let design = Design::StratifiedTwoStage { munis_per_stratum: 2, units_per_muni: 20 };
    let sample = simulation::draw_sample(&pop.data, &design, 72).unwrap();
    let census = pop.data.hide_indicators(sp.census_missing());
    let fits = fits_for(&sample, &sp);
    let cfg = BootstrapConfig { b: 2, l_inner: 10, refit: true, seed: 73 };
    let a = bootstrap_mse(&census, &sample, &fits, &sp, &cfg, &FitConfig::default()).unwrap();
    assert_eq!(a.replicates, 2);
    assert!(a.mse.values().all(|m| m.is_finite() && *m >= 0.0));
    let b = bootstrap_mse(&census, &sample, &fits, &sp, &cfg, &FitConfig::default()).unwrap();
    assert_eq!(a, b);
    let bad = BootstrapConfig { b: 1, ..cfg };
    assert!(bootstrap_mse(&census, &sample, &fits, &sp, &bad, &FitConfig::default()).is_err());
}

#[test]
fn plugin_probabilities_cover_the_census() {
    let sp = spec(&[2, 3]);
    let pop = population(6, 25, &[2, 3], 81);
    let sample = simulation::draw_sample(&pop.data, &Design::Srs { n: 60 }, 82).unwrap();
    let census = pop.data.hide_indicators(sp.census_missing());
    let table = plugin_probabilities(&census, &fits_for(&sample, &sp), &sp).unwrap();
    assert_eq!(table.n_units(), census.len());
    for j in 0..census.len() {
        for m in 0..2 {
            assert!((0.0..1.0).contains(&table.get(j, m)));
        }
    }
}

fn gh_dataset(order: &[usize]) -> Dataset {
    let mut s = rng::stream(91, "gh-order", &[]);
    let mut by_domain: Vec<Vec<UnitRecord>> = Vec::new();
    for d in 0..5 {
        let u = 0.8 * rng::standard_normal(&mut s);
        by_domain.push(
            (0..15)
                .map(|_| {
                    let x = rng::standard_normal(&mut s);
                    let p = 1.0 / (1.0 + (-(-0.2 + 0.7 * x + u)).exp());
                    UnitRecord {
                        department: DomainId::new("01"),
                        domain: DomainId::new(format!("0100{d}")),
                        unit_id: None,
                        covariates: vec![x],
                        indicators: vec![Some(rng::bernoulli(&mut s, p))],
                        design_weight: 1.0,
                    }
                })
                .collect(),
        );
    }
    let records = order.iter().flat_map(|&d| by_domain[d].clone()).collect();
    Dataset::new(Role::Survey, vec!["x_1".into()], vec!["y".into()], records).unwrap()
}

#[test]
fn quadrature_ignores_domain_order() {
    let a = oracle::gh_marginal_loglik(&gh_dataset(&[0, 1, 2, 3, 4]), 0, &[-0.2, 0.7], 0.8, 50).unwrap();
    let b = oracle::gh_marginal_loglik(&gh_dataset(&[3, 0, 4, 2, 1]), 0, &[-0.2, 0.7], 0.8, 50).unwrap();
    assert!(((a - b) / a).abs() < 1e-12, "{a} vs {b}");
    let fine = oracle::gh_marginal_loglik(&gh_dataset(&[0, 1, 2, 3, 4]), 0, &[-0.2, 0.7], 0.8, 100).unwrap();
    assert!(((a - fine) / fine).abs() < 1e-8);
}

#[test]
fn unsampled_domains_are_still_estimated() {
    let sp = spec(&[3]);
    let pop = population(10, 30, &[3], 101);
    let design = Design::StratifiedTwoStage { munis_per_stratum: 2, units_per_muni: 15 };
    let sample = simulation::draw_sample(&pop.data, &design, 102).unwrap();
    let sampled: BTreeSet<&DomainId> = sample.domain_index().keys().collect();
    assert!(sampled.len() < 10);
    let census = pop.data.hide_indicators(sp.census_missing());
    let est = estimate_headcount(&census, &fits_for(&sample, &sp), &sp, 30, 103).unwrap();
    assert_eq!(est.iter().filter(|e| e.level == Level::Municipality).count(), 10);
}
