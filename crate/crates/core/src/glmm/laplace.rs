//! Laplace-approximated marginal log-likelihood of the random-intercept
//! logit model and its exact gradient.
//!
//! For domain `d` with linear predictors `η_j = x_j'β` and `σ = e^τ`:
//!
//! ```text
//! h(u)  = Σ_j log p(y_j | η_j + u) − u²/(2σ²)
//! û     = argmax h,     H = −h''(û) = Σ_j w_j + 1/σ²,   w_j = π_j(1 − π_j)
//! ℓ_d   = h(û) − log σ − ½ log H  =  h(û) − ½ log(1 + σ² Σ_j w_j)
//! ```
//!
//! The gradient accounts for the dependence of `û` on `(β, τ)` through the
//! stationarity condition, so it is the total derivative of `ℓ`.

use alloc::vec;
use alloc::vec::Vec;

use super::model::ModelData;
use crate::error::{Error, Result};
use crate::math;

const MAX_HALVINGS: usize = 30;

#[derive(Clone, Copy, Debug)]
pub struct InnerOptions {
    pub tol: f64,
    pub max_iter: usize,
}

/// Conditional mode of one domain's random intercept and the curvature
/// `−h''` there.
pub(crate) fn domain_mode(
    eta: &[f64],
    y: &[bool],
    sigma: f64,
    start: f64,
    opts: InnerOptions,
) -> Option<(f64, f64)> {
    let prec = 1.0 / (sigma * sigma);
    let objective = |u: f64| -> f64 {
        eta.iter().zip(y).map(|(e, &yy)| math::bernoulli_logpmf(yy, e + u)).sum::<f64>() - 0.5 * prec * u * u
    };
    let derivs = |u: f64| -> (f64, f64) {
        let mut g = -prec * u;
        let mut h = prec;
        for (e, &yy) in eta.iter().zip(y) {
            let p = math::logistic(e + u);
            g += f64::from(u8::from(yy)) - p;
            h += p * (1.0 - p);
        }
        (g, h)
    };
    let mut u = if start.is_finite() { start } else { 0.0 };
    let mut f = objective(u);
    for _ in 0..opts.max_iter {
        let (g, h) = derivs(u);
        let step = g / h;
        // Below the rounding floor of u no further progress is possible.
        if step.abs() < opts.tol || step.abs() <= 4.0 * f64::EPSILON * u.abs().max(1.0) {
            let (_, h) = derivs(u + step);
            return Some((u + step, h));
        }
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..=MAX_HALVINGS {
            let cand = u + t * step;
            let fc = objective(cand);
            // Near the mode f is flat to rounding; a smaller |h'| still
            // certifies progress on a strictly concave h.
            if cand != u && (fc > f || derivs(cand).0.abs() < g.abs()) {
                u = cand;
                f = fc;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            // No representable progress along the Newton direction.
            let (_, h) = derivs(u);
            return Some((u, h));
        }
    }
    None
}

/// Conditional modes for all domains at `(β, σ)`.
pub(crate) fn modes(
    data: &ModelData,
    beta: &[f64],
    sigma: f64,
    start: Option<&[f64]>,
    opts: InnerOptions,
) -> Result<Vec<(f64, f64)>> {
    let eta = data.linear_predictor(beta);
    data.groups
        .iter()
        .enumerate()
        .map(|(g, grp)| {
            let s = start.map_or(0.0, |s| s[g]);
            domain_mode(&eta[grp.rows.clone()], &data.y[grp.rows.clone()], sigma, s, opts)
                .ok_or_else(|| Error::InnerNoConvergence { domain: grp.domain.clone() })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct LaplaceEval {
    pub loglik: f64,
    /// d loglik / d(β, τ), τ = log σ.
    pub gradient: Vec<f64>,
    pub modes: Vec<f64>,
}

/// Laplace log-likelihood and gradient at `params = (β, τ)`.
pub fn evaluate(data: &ModelData, params: &[f64], start: Option<&[f64]>, opts: InnerOptions) -> Result<LaplaceEval> {
    let c = data.ncol;
    let beta = &params[..c];
    let tau = params[c];
    let sigma = math::exp(tau);
    let s2 = sigma * sigma;
    let eta = data.linear_predictor(beta);
    let mut loglik = 0.0;
    let mut gradient = vec![0.0; c + 1];
    let mut modes = Vec::with_capacity(data.groups.len());
    let mut sx = vec![0.0; c];
    let mut sx2 = vec![0.0; c];
    for (g, grp) in data.groups.iter().enumerate() {
        let rows = grp.rows.clone();
        let s = start.map_or(0.0, |s| s[g]);
        let (u, _) = domain_mode(&eta[rows.clone()], &data.y[rows.clone()], sigma, s, opts)
            .ok_or_else(|| Error::InnerNoConvergence { domain: grp.domain.clone() })?;
        modes.push(u);
        let mut a = 0.0;
        let mut sw = 0.0;
        let mut sw1 = 0.0;
        sx.iter_mut().for_each(|v| *v = 0.0);
        sx2.iter_mut().for_each(|v| *v = 0.0);
        for i in rows {
            let e = eta[i] + u;
            let yy = data.y[i];
            let p = math::logistic(e);
            let w = p * (1.0 - p);
            let w1 = w * (1.0 - 2.0 * p);
            a += math::bernoulli_logpmf(yy, e);
            sw += w;
            sw1 += w1;
            let resid = f64::from(u8::from(yy)) - p;
            let r = data.row(i);
            for j in 0..c {
                gradient[j] += resid * r[j];
                sx[j] += w * r[j];
                sx2[j] += w1 * r[j];
            }
        }
        let h = sw + 1.0 / s2;
        loglik += a - 0.5 * u * u / s2 - 0.5 * math::ln_1p(s2 * sw);
        // ∂ℓ/∂u at the mode (non-zero only through the log-curvature term).
        let du = -0.5 * sw1 / h;
        for j in 0..c {
            gradient[j] += -0.5 * sx2[j] / h - du * sx[j] / h;
        }
        gradient[c] += u * u / s2 - s2 * sw / (1.0 + s2 * sw) + du * 2.0 * u / (s2 * h);
    }
    Ok(LaplaceEval { loglik, gradient, modes })
}
