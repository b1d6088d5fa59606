//! Unit-level random-intercept Bernoulli logit model:
//! `logit π_dj = x_dj'β + u_d`, `u_d ~ N(0, σ_u²)`, fitted by maximising the
//! Laplace approximation of the marginal likelihood.

mod fit;
pub mod laplace;
pub mod logistic;
mod model;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use self::laplace::InnerOptions;
pub use self::model::{Group, ModelData};
use crate::data::{link_units, Dataset, DomainId};
use crate::error::{Error, Result};
use crate::math;

/// Any |β_j| beyond this during fitting is treated as separation.
pub const SEPARATION_BOUND: f64 = 50.0;

/// σ̂_u below this is treated as the σ_u = 0 boundary.
pub const SIGMA_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub outer_tol: f64,
    pub outer_max_iter: usize,
    pub sigma_init: f64,
    /// Fit on centred and scaled covariates, reporting β on the input scale.
    pub standardize: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            inner_tol: 1e-8,
            inner_max_iter: 100,
            outer_tol: 1e-6,
            outer_max_iter: 500,
            sigma_init: 0.5,
            standardize: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.inner_tol > 0.0
            && self.outer_tol > 0.0
            && self.inner_max_iter >= 1
            && self.outer_max_iter >= 1
            && self.sigma_init > 0.0
            && self.sigma_init.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidFitConfig(alloc::format!("{self:?}")))
        }
    }

    pub(crate) fn inner(&self) -> InnerOptions {
        InnerOptions { tol: self.inner_tol, max_iter: self.inner_max_iter }
    }
}

/// A fitted model for one indicator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlmmFit {
    #[serde(rename = "indicator")]
    pub indicator_name: String,
    /// Intercept first.
    pub beta: Vec<f64>,
    pub sigma_u: f64,
    pub u_hat: BTreeMap<DomainId, f64>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_se: Option<Vec<f64>>,
}

impl GlmmFit {
    pub fn p(&self) -> usize {
        self.beta.len() - 1
    }

    /// `x'β̂ + û_d`, with û_d = 0 for domains the model never saw.
    pub fn linear_predictor(&self, covariates: &[f64], domain: &DomainId) -> Result<f64> {
        if covariates.len() != self.p() {
            return Err(Error::DimensionMismatch { expected: self.p(), found: covariates.len() });
        }
        let u = self.u_hat.get(domain).copied().unwrap_or(0.0);
        Ok(self.beta[0] + math::dot(&self.beta[1..], covariates) + u)
    }
}

/// Fit the model for indicator `indicator_index` of a survey dataset.
pub fn fit(data: &Dataset, indicator_index: usize, config: &FitConfig) -> Result<GlmmFit> {
    fit_model(&ModelData::from_dataset(data, indicator_index)?, config)
}

pub fn fit_model(data: &ModelData, config: &FitConfig) -> Result<GlmmFit> {
    fit_model_from(data, config, None)
}

/// Fit starting from a previous fit (same design) instead of the logistic
/// initialisation.
pub fn fit_model_from(data: &ModelData, config: &FitConfig, warm: Option<&GlmmFit>) -> Result<GlmmFit> {
    config.validate()?;
    if !math::gram_full_rank(&data.gram()) {
        return Err(Error::RankDeficientDesign { indicator: data.indicator.clone() });
    }
    if config.standardize {
        return fit_standardized(data, config);
    }
    let (beta, sigma) = match warm {
        Some(w) if w.beta.len() == data.ncol => (w.beta.clone(), if w.sigma_u > 0.0 { w.sigma_u } else { config.sigma_init }),
        _ => {
            let init = logistic::fit(data, config.inner_tol, config.inner_max_iter)?;
            (init.beta, config.sigma_init)
        }
    };
    if data.groups.len() < 2 {
        return Err(Error::InsufficientDomains(data.groups.len()));
    }
    let modes = warm.map(|w| data.groups.iter().map(|g| w.u_hat.get(&g.domain).copied().unwrap_or(0.0)).collect());
    fit::optimize(data, config, fit::Start { beta, sigma, modes })
}

fn fit_standardized(data: &ModelData, config: &FitConfig) -> Result<GlmmFit> {
    let mut scaled = data.clone();
    let (means, sds) = scaled.standardize();
    let inner = FitConfig { standardize: false, ..config.clone() };
    let mut out = fit_model_from(&scaled, &inner, None)?;
    let shift: f64 = (0..means.len()).map(|j| out.beta[j + 1] * means[j] / sds[j]).sum();
    out.beta[0] -= shift;
    for j in 0..sds.len() {
        out.beta[j + 1] /= sds[j];
    }
    out.beta_se = fit::standard_errors(data, &inner, &out.beta, out.sigma_u);
    Ok(out)
}

/// Conditional modes and curvatures of the random intercepts at `(β, σ_u)`.
pub fn inner_modes(
    beta: &[f64],
    sigma_u: f64,
    data: &Dataset,
    indicator_index: usize,
    config: &FitConfig,
) -> Result<BTreeMap<DomainId, (f64, f64)>> {
    if !(sigma_u > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("sigma_u must be positive, got {sigma_u}")));
    }
    let md = ModelData::from_dataset(data, indicator_index)?;
    if beta.len() != md.ncol {
        return Err(Error::DimensionMismatch { expected: md.ncol, found: beta.len() });
    }
    let modes = laplace::modes(&md, beta, sigma_u, None, config.inner())?;
    Ok(md.groups.iter().map(|g| g.domain.clone()).zip(modes).collect())
}

/// Laplace log-likelihood at `(β, σ_u)`; σ_u = 0 gives the logistic likelihood.
pub fn laplace_loglik(data: &ModelData, beta: &[f64], sigma_u: f64, config: &FitConfig) -> Result<f64> {
    if sigma_u <= 0.0 {
        return Ok(logistic::loglik(data, beta));
    }
    let mut params = beta.to_vec();
    params.push(math::ln(sigma_u));
    Ok(laplace::evaluate(data, &params, None, config.inner())?.loglik)
}

/// Refit only the random-effect modes with β̂ and σ̂_u held fixed.
pub fn refit_modes(data: &ModelData, base: &GlmmFit, config: &FitConfig) -> Result<GlmmFit> {
    let mut out = base.clone();
    out.u_hat = if base.sigma_u > 0.0 {
        let modes = laplace::modes(data, &base.beta, base.sigma_u, None, config.inner())?;
        data.groups.iter().map(|g| g.domain.clone()).zip(modes.into_iter().map(|m| m.0)).collect()
    } else {
        data.groups.iter().map(|g| (g.domain.clone(), 0.0)).collect()
    };
    out.loglik = laplace_loglik(data, &base.beta, base.sigma_u, config)?;
    Ok(out)
}

/// Largest probability strictly below one.
const P_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

/// Plug-in probability `exp(η̂)/(1 + exp(η̂))`, kept strictly inside (0, 1).
pub fn predict_plugin(fit: &GlmmFit, covariates: &[f64], domain: &DomainId) -> Result<f64> {
    Ok(clamp_probability(math::logistic(fit.linear_predictor(covariates, domain)?)))
}

#[inline]
pub(crate) fn clamp_probability(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, P_MAX)
}

/// Plug-in domain proportion: observed sample values plus predicted
/// probabilities for the non-sampled census units.
///
/// When survey records link to census rows by unit id the non-sampled set
/// is exact. Otherwise the `N_d − n_d` non-sampled units are represented by
/// the domain's mean census prediction.
pub fn plugin_proportion(
    fit: &GlmmFit,
    census: &Dataset,
    survey: &Dataset,
    indicator_index: usize,
) -> Result<BTreeMap<DomainId, f64>> {
    let mut sampled_sum: BTreeMap<&DomainId, (f64, usize)> = BTreeMap::new();
    for r in survey.records() {
        let y = r.indicators[indicator_index].ok_or_else(|| Error::IndicatorNotObserved {
            indicator: survey.indicator_names()[indicator_index].clone(),
        })?;
        let e = sampled_sum.entry(&r.domain).or_insert((0.0, 0));
        e.0 += f64::from(u8::from(y));
        e.1 += 1;
    }
    let linked = link_units(survey, census).map(|pos| {
        let mut flags = alloc::vec![false; census.len()];
        pos.into_iter().for_each(|p| flags[p] = true);
        flags
    });
    let mut out = BTreeMap::new();
    for (domain, rows) in census.domain_index() {
        let n_census = rows.len();
        if n_census == 0 {
            return Err(Error::UnknownDomain(domain.clone()));
        }
        let (ysum, n_s) = sampled_sum.get(domain).copied().unwrap_or((0.0, 0));
        let value = match &linked {
            Some(flags) => {
                let mut total = ysum;
                for &row in rows.iter().filter(|&&row| !flags[row]) {
                    total += predict_plugin(fit, &census.records()[row].covariates, domain)?;
                }
                total / n_census as f64
            }
            None if n_s >= n_census => ysum / n_s as f64,
            None => {
                let mut psum = 0.0;
                for &row in rows {
                    psum += predict_plugin(fit, &census.records()[row].covariates, domain)?;
                }
                let mean_pred = psum / n_census as f64;
                (ysum + (n_census - n_s) as f64 * mean_pred) / n_census as f64
            }
        };
        out.insert(domain.clone(), value);
    }
    Ok(out)
}
