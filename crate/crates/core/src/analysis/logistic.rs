//! Two-parameter logistic regression `P(y = 1) = σ(β₀ + β₁ x)` fitted by IRLS.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const MAX_ITER: usize = 100;
/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LogisticError {
    #[error("x and y lengths differ ({0} vs {1})")]
    Length(usize, usize),
    #[error("both outcomes must be present")]
    SingleOutcome,
    #[error("outcomes are separated by a threshold on x; the likelihood has no maximum")]
    Separation,
    #[error("predictor is constant")]
    ConstantPredictor,
    #[error("non-finite predictor at {0}")]
    NonFinite(usize),
    #[error("IRLS did not converge in {0} iterations")]
    NoConvergence(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub beta0: f64,
    pub beta1: f64,
    pub se0: f64,
    pub se1: f64,
    pub z0: f64,
    pub z1: f64,
    pub n: usize,
    pub iterations: usize,
    pub log_likelihood: f64,
    /// `‖∇ℓ(β̂)‖₂` at the returned estimate.
    pub gradient_norm: f64,
}

impl LogisticFit {
    /// Multiplicative change in the odds per unit of `x`.
    pub fn odds_ratio(&self) -> f64 {
        self.beta1.exp()
    }

    pub fn ci95_beta1(&self) -> (f64, f64) {
        (self.beta1 - Z_95 * self.se1, self.beta1 + Z_95 * self.se1)
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

struct Moments {
    gradient: Vector2<f64>,
    information: Matrix2<f64>,
    log_likelihood: f64,
}

fn moments(x: &[f64], y: &[bool], beta: Vector2<f64>) -> Moments {
    let mut gradient = Vector2::zeros();
    let mut information = Matrix2::zeros();
    let mut log_likelihood = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let eta = beta[0] + beta[1] * xi;
        let p = sigmoid(eta);
        let r = yi as u8 as f64 - p;
        let w = p * (1.0 - p);
        gradient += Vector2::new(r, r * xi);
        information += Matrix2::new(w, w * xi, w * xi, w * xi * xi);
        log_likelihood += if yi { -softplus(-eta) } else { -softplus(eta) };
    }
    Moments {
        gradient,
        information,
        log_likelihood,
    }
}

/// Maximum-likelihood fit with Wald statistics from the inverse information
/// at the estimate. Complete or quasi-complete separation is reported as an
/// error rather than returning diverging estimates.
pub fn fit_logistic(x: &[f64], y: &[bool]) -> Result<LogisticFit, LogisticError> {
    if x.len() != y.len() {
        return Err(LogisticError::Length(x.len(), y.len()));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(LogisticError::NonFinite(i));
    }
    let range = |flag: bool| {
        x.iter()
            .zip(y)
            .filter(|(_, &yi)| yi == flag)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&v, _)| (lo.min(v), hi.max(v)))
    };
    let (lo1, hi1) = range(true);
    let (lo0, hi0) = range(false);
    if lo1 > hi1 || lo0 > hi0 {
        return Err(LogisticError::SingleOutcome);
    }
    if lo1.min(lo0) == hi1.max(hi0) {
        return Err(LogisticError::ConstantPredictor);
    }
    if hi0 <= lo1 || hi1 <= lo0 {
        return Err(LogisticError::Separation);
    }

    let mut beta = Vector2::zeros();
    for iter in 1..=MAX_ITER {
        let m = moments(x, y, beta);
        let step = m.information.lu().solve(&m.gradient).ok_or(LogisticError::ConstantPredictor)?;
        beta += step;
        if step.amax() <= 1e-13 * (1.0 + beta.amax()) {
            let m = moments(x, y, beta);
            let cov = m.information.try_inverse().ok_or(LogisticError::ConstantPredictor)?;
            let (se0, se1) = (cov[(0, 0)].sqrt(), cov[(1, 1)].sqrt());
            return Ok(LogisticFit {
                beta0: beta[0],
                beta1: beta[1],
                se0,
                se1,
                z0: beta[0] / se0,
                z1: beta[1] / se1,
                n: x.len(),
                iterations: iter,
                log_likelihood: m.log_likelihood,
                gradient_norm: m.gradient.norm(),
            });
        }
    }
    Err(LogisticError::NoConvergence(MAX_ITER))
}
