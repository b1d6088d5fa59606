//! Independent ground truths used to check the estimators.
//!
//! * Closed-form poverty probabilities of a single unit with one or two
//!   missing indicators of equal weight.
//! * Exhaustive expectation of a domain headcount over all outcomes of the
//!   missing indicators.
//! * Adaptive Gauss–Hermite evaluation of the random-intercept marginal
//!   log-likelihood.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glmm::laplace::{domain_mode, InnerOptions};
use crate::glmm::ModelData;
use crate::indicator::{is_poor, IndicatorSpec};
use crate::math;

/// A unit whose observed indicators contribute `k` to the score, with one or
/// two missing indicators of weight `alpha` each, against threshold `delta`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitPovertyProblem {
    pub alpha: f64,
    pub k: f64,
    pub delta: f64,
    pub pis: Vec<f64>,
}

impl UnitPovertyProblem {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidProblem(m.into()));
        if !(self.alpha > 0.0) {
            return bad("alpha must be positive");
        }
        if !(0.0..=1.0).contains(&self.k) {
            return bad("k outside [0, 1]");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta outside (0, 1)");
        }
        if self.pis.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("probability outside [0, 1]");
        }
        Ok(())
    }

    fn arity(&self, expected: usize) -> Result<()> {
        if self.pis.len() != expected {
            return Err(Error::WrongArity { expected, found: self.pis.len() });
        }
        self.validate()
    }
}

/// `E(Z)` with one missing indicator:
/// 1 if δ−k ≤ 0, π if 0 < δ−k ≤ α, 0 if α < δ−k.
pub fn expected_poor_one_missing(p: &UnitPovertyProblem) -> Result<f64> {
    p.arity(1)?;
    let gap = p.delta - p.k;
    Ok(if gap <= 0.0 {
        1.0
    } else if gap <= p.alpha {
        p.pis[0]
    } else {
        0.0
    })
}

/// `E(Z)` with two independent missing indicators of weight α.
pub fn expected_poor_two_missing(p: &UnitPovertyProblem) -> Result<f64> {
    p.arity(2)?;
    let (p1, p2) = (p.pis[0], p.pis[1]);
    let gap = p.delta - p.k;
    Ok(if gap <= 0.0 {
        1.0
    } else if gap <= p.alpha {
        p2 * (1.0 - p1) + p1 * (1.0 - p2) + p1 * p2
    } else if gap <= 2.0 * p.alpha {
        p1 * p2
    } else {
        0.0
    })
}

/// Largest `n_d · |missing|` accepted by [`enumerate_expected_headcount`].
pub const ENUMERATION_BITS: usize = 24;

/// Exact `E[H_d]` by summing over every outcome of the missing indicators.
///
/// `rows[j]` holds unit `j`'s K indicators (missing positions are ignored);
/// `probs[j][m]` is the probability that the `m`-th census-missing indicator
/// (in ascending index order) equals 1.
pub fn enumerate_expected_headcount<R: AsRef<[Option<bool>]>>(
    rows: &[R],
    probs: &[Vec<f64>],
    spec: &IndicatorSpec,
) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::EmptyDomain);
    }
    if probs.len() != rows.len() {
        return Err(Error::InvalidArgument("one probability row per unit required".into()));
    }
    let missing: Vec<usize> = spec.census_missing().iter().copied().collect();
    let bits = rows.len() * missing.len();
    if bits > ENUMERATION_BITS {
        return Err(Error::TooLargeToEnumerate { bits });
    }
    let mut total = 0.0;
    for (row, pr) in rows.iter().zip(probs) {
        if pr.len() != missing.len() {
            return Err(Error::WrongArity { expected: missing.len(), found: pr.len() });
        }
        let base = spec.observed_score(row.as_ref())?;
        let mut p_poor = 0.0;
        for outcome in 0u32..(1 << missing.len()) {
            let mut prob = 1.0;
            let mut q = base;
            for (m, &k) in missing.iter().enumerate() {
                if outcome >> m & 1 == 1 {
                    prob *= pr[m];
                    q += spec.weights()[k];
                } else {
                    prob *= 1.0 - pr[m];
                }
            }
            if is_poor(q, spec.z()) {
                p_poor += prob;
            }
        }
        total += p_poor;
    }
    Ok(total / rows.len() as f64)
}

/// Gauss–Hermite rule for `∫ e^{-x²} f(x) dx`: nodes and weights.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0;
    for i in 1..=n.div_ceil(2) {
        z = match i {
            1 => math::sqrt(2.0 * nf + 1.0) - 1.85575 * libm::pow(2.0 * nf + 1.0, -0.16667),
            2 => z - 1.14 * libm::pow(nf, 0.426) / z,
            3 => 1.86 * z - 0.86 * x[0],
            4 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 3],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * math::sqrt(2.0 / jf) * p2 - math::sqrt((jf - 1.0) / jf) * p3;
            }
            pp = math::sqrt(2.0 * nf) * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-14 * z.abs().max(1.0) {
                break;
            }
        }
        x[i - 1] = z;
        x[n - i] = -z;
        w[i - 1] = 2.0 / (pp * pp);
        w[n - i] = w[i - 1];
    }
    (x, w)
}

/// Marginal log-likelihood of indicator `indicator_index` by adaptive
/// Gauss–Hermite quadrature, centred and scaled at each domain's mode.
pub fn gh_marginal_loglik(
    data: &Dataset,
    indicator_index: usize,
    beta: &[f64],
    sigma_u: f64,
    nodes: usize,
) -> Result<f64> {
    gh_marginal_loglik_model(&ModelData::from_dataset(data, indicator_index)?, beta, sigma_u, nodes)
}

pub fn gh_marginal_loglik_model(data: &ModelData, beta: &[f64], sigma_u: f64, nodes: usize) -> Result<f64> {
    if nodes < 5 {
        return Err(Error::InvalidArgument("at least 5 quadrature nodes required".into()));
    }
    if !(sigma_u > 0.0) {
        return Err(Error::InvalidArgument("sigma_u must be positive".into()));
    }
    if beta.len() != data.ncol() {
        return Err(Error::DimensionMismatch { expected: data.ncol(), found: beta.len() });
    }
    let (x, w) = gauss_hermite(nodes);
    let log_w: Vec<f64> = w.iter().zip(&x).map(|(wi, xi)| math::ln(*wi) + xi * xi).collect();
    let eta = data.linear_predictor(beta);
    let opts = InnerOptions { tol: 1e-12, max_iter: 200 };
    let s2 = sigma_u * sigma_u;
    let log_norm = -0.5 * math::ln(2.0 * core::f64::consts::PI * s2);
    let mut total = 0.0;
    for grp in data.groups() {
        let e = &eta[grp.rows.clone()];
        let y = &data.y[grp.rows.clone()];
        let (mode, curv) = domain_mode(e, y, sigma_u, 0.0, opts)
            .ok_or_else(|| Error::InnerNoConvergence { domain: grp.domain.clone() })?;
        let scale = core::f64::consts::SQRT_2 / math::sqrt(curv);
        let terms: Vec<f64> = x
            .iter()
            .zip(&log_w)
            .map(|(xi, lw)| {
                let u = mode + scale * xi;
                let h: f64 = e.iter().zip(y).map(|(ej, &yj)| math::bernoulli_logpmf(yj, ej + u)).sum::<f64>()
                    - 0.5 * u * u / s2
                    + log_norm;
                lw + h
            })
            .collect();
        let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return Err(Error::QuadratureUnderflow(grp.domain.clone()));
        }
        let lse = m + math::ln(terms.iter().map(|t| math::exp(t - m)).sum::<f64>());
        total += math::ln(scale) + lse;
    }
    Ok(total)
}
