//! Parametric bootstrap MSE of the headcount estimator and the coefficient
//! of variation.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{link_units, Dataset, DomainId, Level};
use crate::error::{Error, Result};
use crate::estimator::{check_fits, monte_carlo, plugin_probabilities, CensusFrame, HeadcountEstimate};
use crate::glmm::{self, clamp_probability, FitConfig, GlmmFit, ModelData};
use crate::indicator::IndicatorSpec;
use crate::math;
use crate::par;
use crate::rng::{self, StreamFamily};

/// Extra attempts for a replicate whose refit fails.
pub const MAX_RETRIES: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    #[serde(rename = "B")]
    pub b: usize,
    #[serde(rename = "L_inner")]
    pub l_inner: usize,
    /// Refit β and σ_u on every bootstrap sample; otherwise only the
    /// random-effect modes are recomputed.
    pub refit: bool,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { b: 200, l_inner: 100, refit: true, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BootstrapResult {
    pub mse: BTreeMap<(Level, DomainId), f64>,
    pub replicates: usize,
    /// Replicates redrawn after a failed refit.
    pub retries: usize,
}

/// `100 · √mse / h_hat`.
pub fn cv(h_hat: f64, mse: f64) -> Result<f64> {
    if !(mse >= 0.0) {
        return Err(Error::InvalidArgument(format!("mse must be non-negative, got {mse}")));
    }
    if !(h_hat > 0.0) {
        return Err(Error::ZeroEstimate);
    }
    Ok(100.0 * math::sqrt(mse) / h_hat)
}

/// Fill `mse` and `cv_percent` of point estimates from a bootstrap result.
/// CV stays `None` where the estimate is zero.
pub fn attach_mse(estimates: &mut [HeadcountEstimate], result: &BootstrapResult) {
    for e in estimates {
        if let Some(&m) = result.mse.get(&(e.level, e.domain.clone())) {
            e.mse = Some(m);
            e.cv_percent = cv(e.h_hat, m).ok();
        }
    }
}

struct Indicator<'a> {
    fit: &'a GlmmFit,
    survey_model: ModelData,
    census_eta: Vec<f64>,
    survey_eta: Vec<f64>,
}

struct Setup<'a> {
    frame: CensusFrame,
    indicators: Vec<Indicator<'a>>,
    domains: Vec<DomainId>,
    census_domain: Vec<usize>,
    survey_domain: Vec<usize>,
    linkage: Option<Vec<usize>>,
    census: &'a Dataset,
    spec: &'a IndicatorSpec,
    fit_config: &'a FitConfig,
    config: &'a BootstrapConfig,
}

fn fixed_eta(fit: &GlmmFit, ds: &Dataset) -> Vec<f64> {
    ds.records().iter().map(|r| fit.beta[0] + math::dot(&fit.beta[1..], &r.covariates)).collect()
}

impl<'a> Setup<'a> {
    /// One bootstrap replicate: squared errors in frame order (departments,
    /// then municipalities).
    fn replicate(&self, b: usize, attempt: usize) -> Result<Vec<f64>> {
        let family = StreamFamily::new(self.config.seed, "bootstrap").child(b as u64).child(attempt as u64);
        let n_census = self.frame.n_units();
        let mut census_y: Vec<Vec<bool>> = Vec::with_capacity(self.indicators.len());
        let mut refits = BTreeMap::new();
        for (m, ind) in self.indicators.iter().enumerate() {
            let mut s_u = family.stream(&[m as u64, 0]);
            let u_star: Vec<f64> =
                self.domains.iter().map(|_| ind.fit.sigma_u * rng::standard_normal(&mut s_u)).collect();
            let mut s_pop = family.stream(&[m as u64, 1]);
            let pop: Vec<bool> = (0..n_census)
                .map(|j| {
                    let p = clamp_probability(math::logistic(ind.census_eta[j] + u_star[self.census_domain[j]]));
                    rng::bernoulli(&mut s_pop, p)
                })
                .collect();
            let sample: Vec<bool> = match &self.linkage {
                Some(pos) => pos.iter().map(|&j| pop[j]).collect(),
                None => {
                    let mut s_smp = family.stream(&[m as u64, 2]);
                    ind.survey_eta
                        .iter()
                        .zip(&self.survey_domain)
                        .map(|(eta, &d)| {
                            rng::bernoulli(&mut s_smp, clamp_probability(math::logistic(eta + u_star[d])))
                        })
                        .collect()
                }
            };
            let model = ind.survey_model.with_response(&sample);
            let refit = if self.config.refit {
                let f = glmm::fit_model_from(&model, self.fit_config, Some(ind.fit))?;
                if !f.converged {
                    return Err(Error::BootstrapFitFailure { replicate: b, reason: "refit did not converge".into() });
                }
                f
            } else {
                glmm::refit_modes(&model, ind.fit, self.fit_config)?
            };
            refits.insert(self.frame.missing()[m], refit);
            census_y.push(pop);
        }
        let truth = self.frame.headcounts_with(|j, m| census_y[m][j]);
        let pihat = plugin_probabilities(self.census, &refits, self.spec)?;
        let est_family = StreamFamily::new(self.config.seed, "bootstrap-estimate").child(b as u64).child(attempt as u64);
        let est = monte_carlo(&self.frame, &pihat, self.config.l_inner, &est_family)?;
        Ok(truth
            .department
            .iter()
            .chain(&truth.municipality)
            .zip(&est)
            .map(|(h, e)| (h - e.h_hat) * (h - e.h_hat))
            .collect())
    }
}

/// Parametric bootstrap MSE for every department and municipality.
///
/// Replicate `b` draws domain effects `u*_d ~ N(0, σ̂²)` and a bootstrap
/// superpopulation of every census-missing indicator from the fitted
/// models, computes the true bootstrap headcount, re-estimates it from the
/// bootstrap sample on the original sample units, and records the squared
/// difference.
pub fn bootstrap_mse(
    census: &Dataset,
    survey: &Dataset,
    fits: &BTreeMap<usize, GlmmFit>,
    spec: &IndicatorSpec,
    config: &BootstrapConfig,
    fit_config: &FitConfig,
) -> Result<BootstrapResult> {
    if config.b < 2 {
        return Err(Error::InvalidArgument("bootstrap needs B >= 2".into()));
    }
    if config.l_inner == 0 {
        return Err(Error::InvalidArgument("L_inner must be at least 1".into()));
    }
    if config.refit && survey.domain_index().len() < 2 {
        return Err(Error::InsufficientSample("refitting needs survey data in at least 2 domains".into()));
    }
    check_fits(fits, spec, census.p())?;
    let frame = CensusFrame::new(census, spec)?;
    let domain_set: BTreeSet<&DomainId> =
        census.domain_index().keys().chain(survey.domain_index().keys()).collect();
    let domains: Vec<DomainId> = domain_set.into_iter().cloned().collect();
    let position = |d: &DomainId| domains.binary_search(d).expect("domain collected above");
    let census_domain = census.records().iter().map(|r| position(&r.domain)).collect();
    let survey_domain = survey.records().iter().map(|r| position(&r.domain)).collect();
    let indicators = frame
        .missing()
        .iter()
        .map(|k| {
            let fit = &fits[k];
            Ok(Indicator {
                fit,
                survey_model: ModelData::from_dataset(survey, *k)?,
                census_eta: fixed_eta(fit, census),
                survey_eta: fixed_eta(fit, survey),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let setup = Setup {
        frame,
        indicators,
        domains,
        census_domain,
        survey_domain,
        linkage: link_units(survey, census),
        census,
        spec,
        fit_config,
        config,
    };

    let runs = par::map_indexed(config.b, |b| {
        let mut last = None;
        for attempt in 0..=MAX_RETRIES {
            match setup.replicate(b, attempt) {
                Ok(sq) => return Ok((sq, attempt)),
                Err(e) => last = Some(e),
            }
        }
        Err(Error::BootstrapFitFailure {
            replicate: b,
            reason: last.map_or_else(|| "unknown".to_string(), |e| e.to_string()),
        })
    });

    let n = setup.frame.departments().len() + setup.frame.municipalities().len();
    let mut sum = vec![0.0; n];
    let mut retries = 0;
    for run in runs {
        let (sq, attempts) = run?;
        retries += attempts;
        for (s, v) in sum.iter_mut().zip(sq) {
            *s += v;
        }
    }
    let keys = setup
        .frame
        .departments()
        .iter()
        .map(|d| (Level::Department, d.clone()))
        .chain(setup.frame.municipalities().iter().map(|d| (Level::Municipality, d.clone())));
    let mse = keys.zip(sum).map(|(k, s)| (k, s / config.b as f64)).collect();
    Ok(BootstrapResult { mse, replicates: config.b, retries })
}
