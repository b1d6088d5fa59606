//! Outer maximisation of the Laplace log-likelihood over `(β, log σ)`.
//!
//! Damped Newton: the Hessian is the central finite difference of the
//! analytic gradient, regularised with a Levenberg shift when it is not
//! negative definite, followed by an Armijo backtracking line search.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::laplace::{self, InnerOptions, LaplaceEval};
use super::logistic;
use super::model::ModelData;
use super::{FitConfig, GlmmFit, SEPARATION_BOUND, SIGMA_FLOOR};
use crate::error::{Error, Result};
use crate::math::{self, Cholesky, Matrix};

const MAX_STEP: f64 = 4.0;
const ARMIJO: f64 = 1e-4;

struct Objective<'a> {
    data: &'a ModelData,
    opts: InnerOptions,
    modes: Vec<f64>,
}

impl Objective<'_> {
    fn eval(&mut self, params: &[f64]) -> Result<LaplaceEval> {
        let e = laplace::evaluate(self.data, params, Some(&self.modes), self.opts)?;
        Ok(e)
    }

    fn commit(&mut self, e: &LaplaceEval) {
        self.modes.clone_from(&e.modes);
    }

    /// Central-difference Hessian of the log-likelihood.
    fn hessian(&mut self, params: &[f64]) -> Result<Matrix> {
        let n = params.len();
        let mut h = Matrix::zeros(n);
        let mut probe = params.to_vec();
        for j in 0..n {
            let step = 1e-5 * params[j].abs().max(1.0);
            probe[j] = params[j] + step;
            let up = self.eval(&probe)?;
            probe[j] = params[j] - step;
            let down = self.eval(&probe)?;
            probe[j] = params[j];
            for i in 0..n {
                h[(i, j)] = (up.gradient[i] - down.gradient[i]) / (2.0 * step);
            }
        }
        h.symmetrize();
        Ok(h)
    }
}

fn negated(h: &Matrix) -> Matrix {
    let n = h.dim();
    let mut m = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = -h[(i, j)];
        }
    }
    m
}

/// Cholesky of `A + λI` with the smallest λ from an escalating ladder.
fn damped_cholesky(a: &Matrix) -> Option<Cholesky> {
    if let Some(c) = Cholesky::new(a, 1e-13) {
        return Some(c);
    }
    let n = a.dim();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(1.0, f64::max);
    let mut lambda = 1e-8 * scale;
    for _ in 0..40 {
        let mut shifted = a.clone();
        for i in 0..n {
            shifted[(i, i)] += lambda;
        }
        if let Some(c) = Cholesky::new(&shifted, 1e-13) {
            return Some(c);
        }
        lambda *= 10.0;
    }
    None
}

pub(crate) struct Start {
    pub beta: Vec<f64>,
    pub sigma: f64,
    pub modes: Option<Vec<f64>>,
}

pub(crate) fn optimize(data: &ModelData, config: &FitConfig, start: Start) -> Result<GlmmFit> {
    let c = data.ncol;
    let opts = InnerOptions { tol: config.inner_tol, max_iter: config.inner_max_iter };
    let mut params = start.beta.clone();
    params.push(math::ln(start.sigma.max(SIGMA_FLOOR * 10.0)));
    let mut obj = Objective { data, opts, modes: start.modes.unwrap_or_else(|| alloc::vec![0.0; data.groups.len()]) };
    let mut cur = obj.eval(&params)?;
    obj.commit(&cur);
    let mut converged = false;
    let mut iterations = 0;
    let tau_floor = math::ln(SIGMA_FLOOR);

    while iterations < config.outer_max_iter {
        iterations += 1;
        let h = obj.hessian(&params)?;
        let Some(chol) = damped_cholesky(&negated(&h)) else { break };
        let mut step = chol.solve(&cur.gradient);
        let largest = step.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        if largest > MAX_STEP {
            step.iter_mut().for_each(|s| *s *= MAX_STEP / largest);
        }
        let slope = math::dot(&cur.gradient, &step);
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..40 {
            let cand: Vec<f64> = params.iter().zip(&step).map(|(p, s)| p + t * s).collect();
            match obj.eval(&cand) {
                Ok(e) if e.loglik.is_finite() && e.loglik >= cur.loglik + ARMIJO * t * slope.max(0.0) => {
                    next = Some((cand, e));
                    break;
                }
                _ => t *= 0.5,
            }
        }
        let Some((cand, e)) = next else {
            // No ascent possible along the Newton direction: stationary to rounding.
            converged = cur.gradient.iter().all(|g| g.abs() <= 1e-4 * (1.0 + cur.loglik.abs()));
            break;
        };
        let moved = params.iter().zip(&cand).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        params = cand;
        obj.commit(&e);
        cur = e;
        if let Some(j) = params[..c].iter().position(|b| b.abs() > SEPARATION_BOUND) {
            return Err(Error::Separation { indicator: data.indicator.clone(), coefficient: j });
        }
        if params[c] < tau_floor {
            return boundary_fit(data, config, iterations);
        }
        if moved < config.outer_tol {
            converged = true;
            break;
        }
    }

    let beta_se = obj.hessian(&params).ok().and_then(|h| {
        let chol = Cholesky::new(&negated(&h), 1e-13)?;
        let cov = chol.inverse();
        Some((0..c).map(|j| math::sqrt(cov[(j, j)])).collect::<Vec<f64>>())
    });
    let u_hat: BTreeMap<_, _> = data.groups.iter().zip(&cur.modes).map(|(g, &u)| (g.domain.clone(), u)).collect();
    Ok(GlmmFit {
        indicator_name: data.indicator.clone(),
        beta: params[..c].to_vec(),
        sigma_u: math::exp(params[c]),
        u_hat,
        loglik: cur.loglik,
        converged,
        iterations,
        beta_se,
    })
}

/// σ̂ collapsed onto the boundary: refit as plain logistic regression.
pub(crate) fn boundary_fit(data: &ModelData, config: &FitConfig, iterations: usize) -> Result<GlmmFit> {
    let lf = logistic::fit(data, config.inner_tol, config.inner_max_iter)?;
    let beta_se = lf.covariance.as_ref().map(|cov| (0..data.ncol).map(|j| math::sqrt(cov[(j, j)])).collect());
    Ok(GlmmFit {
        indicator_name: data.indicator.clone(),
        beta: lf.beta,
        sigma_u: 0.0,
        u_hat: data.groups.iter().map(|g| (g.domain.clone(), 0.0)).collect(),
        loglik: lf.loglik,
        converged: lf.converged,
        iterations: iterations + lf.iterations,
        beta_se,
    })
}

/// Standard errors of β from the observed information at a fitted point.
pub(crate) fn standard_errors(data: &ModelData, config: &FitConfig, beta: &[f64], sigma: f64) -> Option<Vec<f64>> {
    let c = data.ncol;
    if sigma <= 0.0 {
        let lf = logistic::fit_from(data, beta)?;
        return Some((0..c).map(|j| math::sqrt(lf[(j, j)])).collect());
    }
    let opts = InnerOptions { tol: config.inner_tol, max_iter: config.inner_max_iter };
    let mut params = beta.to_vec();
    params.push(math::ln(sigma));
    let mut obj = Objective { data, opts, modes: alloc::vec![0.0; data.groups.len()] };
    let e = obj.eval(&params).ok()?;
    obj.commit(&e);
    let h = obj.hessian(&params).ok()?;
    let cov = Cholesky::new(&negated(&h), 1e-13)?.inverse();
    Some((0..c).map(|j| math::sqrt(cov[(j, j)])).collect())
}
