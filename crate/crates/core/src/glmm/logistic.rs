//! Plain (fixed-effects only) logistic regression by Newton–Raphson.

use alloc::vec;
use alloc::vec::Vec;

use super::model::ModelData;
use super::SEPARATION_BOUND;
use crate::error::{Error, Result};
use crate::math::{self, Cholesky, Matrix};

#[derive(Clone, Debug)]
pub struct LogisticFit {
    pub beta: Vec<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Inverse observed information.
    pub covariance: Option<Matrix>,
}

pub fn loglik(data: &ModelData, beta: &[f64]) -> f64 {
    (0..data.n()).map(|i| math::bernoulli_logpmf(data.y[i], math::dot(data.row(i), beta))).sum()
}

fn score_and_information(data: &ModelData, beta: &[f64]) -> (Vec<f64>, Matrix) {
    let c = data.ncol;
    let mut g = vec![0.0; c];
    let mut h = Matrix::zeros(c);
    for i in 0..data.n() {
        let r = data.row(i);
        let p = math::logistic(math::dot(r, beta));
        let resid = f64::from(u8::from(data.y[i])) - p;
        let w = p * (1.0 - p);
        for a in 0..c {
            g[a] += resid * r[a];
            for b in 0..=a {
                h[(a, b)] += w * r[a] * r[b];
            }
        }
    }
    for a in 0..c {
        for b in 0..a {
            h[(b, a)] = h[(a, b)];
        }
    }
    (g, h)
}

fn separation(data: &ModelData, beta: &[f64]) -> Error {
    let coefficient = beta
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map_or(0, |(j, _)| j);
    Error::Separation { indicator: data.indicator.clone(), coefficient }
}

pub fn fit(data: &ModelData, tol: f64, max_iter: usize) -> Result<LogisticFit> {
    let mut beta = vec![0.0; data.ncol];
    let mut ll = loglik(data, &beta);
    for it in 1..=max_iter {
        let (g, h) = score_and_information(data, &beta);
        let Some(chol) = Cholesky::new(&h, 1e-14) else {
            return Err(separation(data, &beta));
        };
        let step = chol.solve(&g);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let cand_ll = loglik(data, &cand);
            if cand_ll >= ll - 1e-12 * ll.abs() {
                beta = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if beta.iter().any(|b| b.abs() > SEPARATION_BOUND) {
            return Err(separation(data, &beta));
        }
        let max_step = step.iter().fold(0.0f64, |m, s| m.max((t * s).abs()));
        if !accepted || max_step < tol {
            let (_, h) = score_and_information(data, &beta);
            let covariance = Cholesky::new(&h, 1e-14).map(|c| c.inverse());
            return Ok(LogisticFit { beta, loglik: ll, iterations: it, converged: accepted, covariance });
        }
    }
    Ok(LogisticFit { beta, loglik: ll, iterations: max_iter, converged: false, covariance: None })
}

/// Inverse information at a given β.
pub(crate) fn fit_from(data: &ModelData, beta: &[f64]) -> Option<Matrix> {
    let (_, h) = score_and_information(data, beta);
    Cholesky::new(&h, 1e-14).map(|c| c.inverse())
}
