//! Synthetic populations and design-based evaluation of the estimator.
//!
//! A population is generated once from the logit mixed model and then held
//! fixed. Each simulation run draws a sample under the chosen design, hides
//! the census-missing indicators from the population, fits the models,
//! estimates every domain and compares against the population headcounts.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DomainId, Level, Role, UnitRecord};
use crate::error::{Error, Result};
use crate::estimator::{monte_carlo, plugin_probabilities, CensusFrame};
use crate::glmm::{self, FitConfig};
use crate::indicator::IndicatorSpec;
use crate::math;
use crate::par;
use crate::rng::{self, Stream, StreamFamily};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainSizes {
    Fixed(usize),
    Uniform { min: usize, max: usize },
}

/// `x = mean + a_d + e`, `a_d ~ N(0, between_sd²)` per domain,
/// `e ~ N(0, within_sd²)` per unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateModel {
    pub mean: f64,
    #[serde(default)]
    pub between_sd: f64,
    pub within_sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    #[serde(rename = "D")]
    pub n_domains: usize,
    /// Municipalities are split into this many departments in contiguous blocks.
    #[serde(default = "one")]
    pub n_departments: usize,
    pub domain_sizes: DomainSizes,
    pub covariates: Vec<CovariateModel>,
    /// One coefficient vector (intercept first) per indicator.
    pub true_beta: Vec<Vec<f64>>,
    pub true_sigma_u: Vec<f64>,
    pub spec: IndicatorSpec,
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl PopulationConfig {
    pub fn p(&self) -> usize {
        self.covariates.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_domains < 2 {
            return bad(format!("need at least 2 domains, got {}", self.n_domains));
        }
        if self.n_departments == 0 || self.n_departments > self.n_domains {
            return bad(format!("n_departments must be in 1..={}", self.n_domains));
        }
        match self.domain_sizes {
            DomainSizes::Fixed(0) => return bad("domain size must be at least 1".into()),
            DomainSizes::Uniform { min, max } if min == 0 || max < min => {
                return bad(format!("invalid domain size range {min}..={max}"));
            }
            _ => {}
        }
        let k = self.spec.k();
        if self.true_beta.len() != k || self.true_sigma_u.len() != k {
            return bad(format!("need coefficients and sigma for all {k} indicators"));
        }
        if let Some(b) = self.true_beta.iter().find(|b| b.len() != self.p() + 1) {
            return bad(format!("coefficient vector of length {} for p = {}", b.len(), self.p()));
        }
        if self.true_sigma_u.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("true_sigma_u must be non-negative".into());
        }
        if self.covariates.iter().any(|c| !(c.between_sd >= 0.0 && c.within_sd >= 0.0)) {
            return bad("covariate standard deviations must be non-negative".into());
        }
        Ok(())
    }
}

/// A fully observed population with its true headcounts.
#[derive(Clone, Debug)]
pub struct Population {
    pub data: Dataset,
    pub truth: BTreeMap<(Level, DomainId), f64>,
    /// True random effects, `[indicator][domain]` in domain order.
    pub effects: Vec<Vec<f64>>,
}

pub fn generate_population(config: &PopulationConfig) -> Result<Population> {
    config.validate()?;
    let family = StreamFamily::new(config.seed, "population");
    let d_digits = digits(config.n_departments);
    let m_digits = digits(config.n_domains);
    let k = config.spec.k();
    let mut sizes_rng = family.stream(&[0]);
    let sizes: Vec<usize> = (0..config.n_domains)
        .map(|_| match config.domain_sizes {
            DomainSizes::Fixed(n) => n,
            DomainSizes::Uniform { min, max } => sizes_rng.random_range(min..=max),
        })
        .collect();
    let mut records = Vec::with_capacity(sizes.iter().sum());
    let mut effects = vec![Vec::with_capacity(config.n_domains); k];
    for (d, &n_d) in sizes.iter().enumerate() {
        let dept_no = d * config.n_departments / config.n_domains + 1;
        let dept = format!("{dept_no:0d_digits$}");
        let muni = DomainId::new(format!("{dept}{:0m_digits$}", d + 1));
        let dept = DomainId::new(dept);
        let mut s_dom = family.child(1).stream(&[d as u64]);
        let u: Vec<f64> = config.true_sigma_u.iter().map(|s| s * rng::standard_normal(&mut s_dom)).collect();
        let shift: Vec<f64> = config.covariates.iter().map(|c| c.between_sd * rng::standard_normal(&mut s_dom)).collect();
        for (kk, uk) in u.iter().enumerate() {
            effects[kk].push(*uk);
        }
        let mut s_units = family.child(2).stream(&[d as u64]);
        for _ in 0..n_d {
            let x: Vec<f64> = config
                .covariates
                .iter()
                .zip(&shift)
                .map(|(c, a)| c.mean + a + c.within_sd * rng::standard_normal(&mut s_units))
                .collect();
            let indicators = config
                .true_beta
                .iter()
                .zip(&u)
                .map(|(b, uk)| {
                    let eta = b[0] + math::dot(&b[1..], &x) + uk;
                    Some(rng::bernoulli(&mut s_units, math::logistic(eta)))
                })
                .collect();
            let id = records.len();
            records.push(UnitRecord {
                department: dept.clone(),
                domain: muni.clone(),
                unit_id: Some(format!("u{id}")),
                covariates: x,
                indicators,
                design_weight: 1.0,
            });
        }
    }
    let data = Dataset::new(
        Role::Census,
        crate::data::names("x", config.p()),
        config.spec.names().to_vec(),
        records,
    )?;
    let truth = true_headcounts(&data, &config.spec)?;
    Ok(Population { data, truth, effects })
}

fn digits(n: usize) -> usize {
    let mut d = 1;
    let mut v = n;
    while v >= 10 {
        v /= 10;
        d += 1;
    }
    d.max(2)
}

/// Headcount of every department and municipality of a fully observed dataset.
pub fn true_headcounts(data: &Dataset, spec: &IndicatorSpec) -> Result<BTreeMap<(Level, DomainId), f64>> {
    let mut out = BTreeMap::new();
    for level in [Level::Department, Level::Municipality] {
        for (d, rows) in data.index(level) {
            let inds: Vec<&[Option<bool>]> = rows.iter().map(|&r| data.records()[r].indicators.as_slice()).collect();
            out.insert((level, d.clone()), spec.headcount(&inds)?);
        }
    }
    Ok(out)
}

/// Weighted (Hájek) or unweighted direct headcount from a sample.
pub fn direct_headcounts(
    sample: &Dataset,
    spec: &IndicatorSpec,
    weighted: bool,
) -> Result<BTreeMap<(Level, DomainId), f64>> {
    let poor: Vec<bool> =
        sample.records().iter().map(|r| spec.unit_is_poor(&r.indicators)).collect::<Result<_>>()?;
    let mut out = BTreeMap::new();
    for level in [Level::Department, Level::Municipality] {
        for (d, rows) in sample.index(level) {
            let (mut num, mut den) = (0.0, 0.0);
            for &r in rows {
                let w = if weighted { sample.records()[r].design_weight } else { 1.0 };
                den += w;
                if poor[r] {
                    num += w;
                }
            }
            out.insert((level, d.clone()), num / den);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// Simple random sampling without replacement over the whole population.
    Srs { n: usize },
    /// Strata = departments; stage 1 samples municipalities per stratum,
    /// stage 2 samples units per selected municipality, both by SRS.
    StratifiedTwoStage { munis_per_stratum: usize, units_per_muni: usize },
}

impl Design {
    pub fn label(&self) -> String {
        match self {
            Design::Srs { n } => format!("srs_{n}"),
            Design::StratifiedTwoStage { munis_per_stratum, units_per_muni } => {
                format!("two_stage_{munis_per_stratum}x{units_per_muni}")
            }
        }
    }
}

fn srs(rng: &mut Stream, n_pop: usize, n: usize) -> Vec<usize> {
    let mut v = index::sample(rng, n_pop, n).into_vec();
    v.sort_unstable();
    v
}

/// Draw a sample with design weights set to inverse inclusion probabilities.
pub fn draw_sample(population: &Dataset, design: &Design, seed: u64) -> Result<Dataset> {
    draw_sample_from(population, design, &mut rng::stream(seed, "sample", &[]))
}

pub fn draw_sample_from(population: &Dataset, design: &Design, rng: &mut Stream) -> Result<Dataset> {
    let n_pop = population.len();
    let (positions, weights) = match *design {
        Design::Srs { n } => {
            if n > n_pop {
                return Err(Error::SampleTooLarge { requested: n, available: n_pop });
            }
            if n == 0 {
                return Err(Error::InvalidConfig("sample size must be positive".into()));
            }
            let pos = srs(rng, n_pop, n);
            let w = n_pop as f64 / n as f64;
            let len = pos.len();
            (pos, vec![w; len])
        }
        Design::StratifiedTwoStage { munis_per_stratum, units_per_muni } => {
            if munis_per_stratum == 0 || units_per_muni == 0 {
                return Err(Error::InvalidConfig("two-stage sizes must be positive".into()));
            }
            let mut strata: BTreeMap<&DomainId, Vec<&DomainId>> = BTreeMap::new();
            for (muni, rows) in population.domain_index() {
                strata.entry(&population.records()[rows[0]].department).or_default().push(muni);
            }
            let mut pos = Vec::new();
            let mut w = Vec::new();
            for munis in strata.values() {
                let m_h = munis.len();
                let m = munis_per_stratum.min(m_h);
                for i in srs(rng, m_h, m) {
                    let rows = &population.domain_index()[munis[i]];
                    let n_i = rows.len();
                    let n = units_per_muni.min(n_i);
                    let weight = (m_h as f64 / m as f64) * (n_i as f64 / n as f64);
                    for j in srs(rng, n_i, n) {
                        pos.push(rows[j]);
                        w.push(weight);
                    }
                }
            }
            (pos, w)
        }
    };
    population.subset(&positions, Role::Survey, Some(&weights))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    #[serde(rename = "L")]
    pub replicates: usize,
    #[serde(default)]
    pub fit: FitConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { replicates: 100, fit: FitConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DomainPerformance {
    pub domain: DomainId,
    pub level: Level,
    pub true_h: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    pub mse: f64,
    pub rmse: f64,
    /// `100 · RMSE / mean estimate`; `None` when the mean estimate is zero.
    pub cv: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub stat: &'static str,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(stat: &'static str, values: &[f64]) -> Self {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        v.sort_by(f64::total_cmp);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        Self {
            stat,
            min: v.first().copied().unwrap_or(f64::NAN),
            q1: math::quantile_sorted(&v, 0.25),
            median: math::quantile_sorted(&v, 0.5),
            mean,
            q3: math::quantile_sorted(&v, 0.75),
            max: v.last().copied().unwrap_or(f64::NAN),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationReport {
    pub design: Design,
    #[serde(rename = "T")]
    pub runs: usize,
    pub failures: usize,
    pub domains: Vec<DomainPerformance>,
    /// Municipality-level distributions of bias, |bias|, RMSE and CV.
    pub summaries: Vec<Summary>,
}

impl SimulationReport {
    pub fn level(&self, level: Level) -> impl Iterator<Item = &DomainPerformance> {
        self.domains.iter().filter(move |d| d.level == level)
    }

    pub fn summary(&self, stat: &str) -> Option<&Summary> {
        self.summaries.iter().find(|s| s.stat == stat)
    }
}

/// Estimates of every domain for one sample, in frame order.
fn one_run(
    population: &Dataset,
    census: &Dataset,
    frame: &CensusFrame,
    design: &Design,
    spec: &IndicatorSpec,
    est: &EstimatorConfig,
    seed: u64,
    t: usize,
) -> Result<Vec<f64>> {
    let mut s = StreamFamily::new(seed, "design-sample").stream(&[t as u64]);
    let sample = draw_sample_from(population, design, &mut s)?;
    let mut fits = BTreeMap::new();
    for &k in spec.census_missing() {
        fits.insert(k, glmm::fit(&sample, k, &est.fit)?);
    }
    let pihat = plugin_probabilities(census, &fits, spec)?;
    let family = StreamFamily::new(seed, "design-estimate").child(t as u64);
    Ok(monte_carlo(frame, &pihat, est.replicates, &family)?.into_iter().map(|e| e.h_hat).collect())
}

/// Mean, bias and MSE of repeated estimates of a true value. The MSE is
/// bias² plus the variance term, so `√mse ≥ |bias|` holds exactly.
pub fn accuracy(truth: f64, estimates: &[f64]) -> (f64, f64, f64) {
    let n = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    let bias = estimates.iter().map(|e| e - truth).sum::<f64>() / n;
    let spread = estimates.iter().map(|e| (e - truth - bias) * (e - truth - bias)).sum::<f64>() / n;
    (mean, bias, bias * bias + spread)
}

/// Design-based evaluation over `runs` repeated samples.
pub fn run_design_simulation(
    population: &Population,
    design: &Design,
    spec: &IndicatorSpec,
    runs: usize,
    est: &EstimatorConfig,
    seed: u64,
) -> Result<SimulationReport> {
    if runs < 2 {
        return Err(Error::InvalidConfig("need at least 2 simulation runs".into()));
    }
    let data = &population.data;
    if (0..data.k()).any(|k| !data.indicator_fully_observed(k)) {
        return Err(Error::InvalidConfig("population must be fully observed".into()));
    }
    let hidden: BTreeSet<usize> = spec.census_missing().clone();
    let census = data.hide_indicators(&hidden);
    let frame = CensusFrame::new(&census, spec)?;
    let results = par::map_indexed(runs, |t| one_run(data, &census, &frame, design, spec, est, seed, t));
    let ok: Vec<Vec<f64>> = results.iter().filter_map(|r| r.as_ref().ok().cloned()).collect();
    let failures = runs - ok.len();
    if failures * 10 > runs {
        return Err(Error::TooManyFailures { failed: failures, total: runs });
    }
    let truth = true_headcounts(data, spec)?;
    let keys: Vec<(Level, DomainId)> = frame
        .departments()
        .iter()
        .map(|d| (Level::Department, d.clone()))
        .chain(frame.municipalities().iter().map(|d| (Level::Municipality, d.clone())))
        .collect();
    let domains: Vec<DomainPerformance> = keys
        .into_iter()
        .enumerate()
        .map(|(i, key)| {
            let h = truth[&key];
            let values: Vec<f64> = ok.iter().map(|run| run[i]).collect();
            let (mean_estimate, bias, mse) = accuracy(h, &values);
            let rmse = math::sqrt(mse);
            DomainPerformance {
                domain: key.1,
                level: key.0,
                true_h: h,
                mean_estimate,
                bias,
                mse,
                rmse,
                cv: (mean_estimate > 0.0).then(|| 100.0 * rmse / mean_estimate),
            }
        })
        .collect();
    let muni: Vec<&DomainPerformance> = domains.iter().filter(|d| d.level == Level::Municipality).collect();
    let col = |f: fn(&DomainPerformance) -> f64| muni.iter().map(|d| f(d)).collect::<Vec<f64>>();
    let summaries = vec![
        Summary::of("bias", &col(|d| d.bias)),
        Summary::of("abs_bias", &col(|d| d.bias.abs())),
        Summary::of("rmse", &col(|d| d.rmse)),
        Summary::of("cv", &col(|d| d.cv.unwrap_or(f64::NAN))),
    ];
    Ok(SimulationReport { design: design.clone(), runs, failures, domains, summaries })
}
