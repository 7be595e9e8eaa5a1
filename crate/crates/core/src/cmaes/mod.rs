//! CMA-ES with cumulative step-size adaptation and rank-one plus rank-μ
//! covariance updates, and the restart-based recognizability search built on it.
//!
//! Constants follow the standard defaults:
//!
//! | symbol | value |
//! |---|---|
//! | λ | `4 + ⌊3 ln d⌋` |
//! | μ | `⌊λ/2⌋` |
//! | w_i | `ln((λ+1)/2) - ln i`, normalized to sum 1 |
//! | μ_eff | `1 / Σ w_i²` |
//! | c_σ | `(μ_eff + 2) / (d + μ_eff + 5)` |
//! | d_σ | `1 + 2 max(0, √((μ_eff-1)/(d+1)) - 1) + c_σ` |
//! | c_c | `(4 + μ_eff/d) / (d + 4 + 2 μ_eff/d)` |
//! | c_1 | `2 / ((d+1.3)² + μ_eff)` |
//! | c_μ | `min(1 - c_1, 2 (μ_eff - 2 + 1/μ_eff) / ((d+2)² + μ_eff))` |
//! | χ_d | `√d (1 - 1/(4d) + 1/(21d²))` |

mod validate;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::seed;

pub use validate::{
    StopReason,
    constrained_revalidate, validate_mesh, RangeOverride, RestartTrace, ValidationConfig, ValidationError, ValidationOutcome,
    ValidationStatus, BOX_RULE,
};

/// Condition number of `C` above which a run is abandoned.
pub const MAX_CONDITION: f64 = 1e14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CmaError {
    #[error("dimension must be at least 1")]
    EmptyDimension,
    #[error("initial step size must be positive and finite, got {0}")]
    BadSigma(f64),
    #[error("population size must be at least 2, got {0}")]
    BadLambda(usize),
    #[error("expected {expected} candidates, got {got}")]
    PopulationSize { expected: usize, got: usize },
    #[error("candidate {index} has dimension {got}, expected {expected}")]
    CandidateDimension { index: usize, expected: usize, got: usize },
    #[error("non-finite fitness at index {0}")]
    NonFinite(usize),
    #[error("covariance ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),
}

pub fn default_lambda(d: usize) -> usize {
    4 + (3.0 * (d as f64).ln()).floor() as usize
}

/// Population used by the recognizability search: `4 + ⌊3 log₁₀ d⌋`, which
/// is 6 at `d = 9`.
pub fn validation_lambda(d: usize) -> usize {
    4 + (3.0 * (d.max(1) as f64).log10()).floor() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Constants {
    pub dim: usize,
    pub lambda: usize,
    pub mu: usize,
    pub weights: Vec<f64>,
    pub mu_eff: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c_1: f64,
    pub c_mu: f64,
    pub chi_n: f64,
}

impl Constants {
    pub fn new(dim: usize, lambda: usize) -> Result<Self, CmaError> {
        if dim == 0 {
            return Err(CmaError::EmptyDimension);
        }
        if lambda < 2 {
            return Err(CmaError::BadLambda(lambda));
        }
        let d = dim as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu).map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (d + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (d + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / d) / (d + 4.0 + 2.0 * mu_eff / d);
        let c_1 = 2.0 / ((d + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((d + 2.0).powi(2) + mu_eff));
        let chi_n = d.sqrt() * (1.0 - 1.0 / (4.0 * d) + 1.0 / (21.0 * d * d));
        Ok(Self {
            dim,
            lambda,
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
        })
    }
}

/// Search distribution `N(mean, σ² C)` plus evolution paths.
#[derive(Debug, Clone)]
pub struct EvolutionState {
    pub consts: Constants,
    pub mean: DVector<f64>,
    pub sigma: f64,
    pub cov: DMatrix<f64>,
    pub p_sigma: DVector<f64>,
    pub p_c: DVector<f64>,
    pub generation: usize,
    /// Eigenvectors `B` and square-rooted eigenvalues `D` of `cov`.
    basis: DMatrix<f64>,
    scales: DVector<f64>,
    condition: f64,
    rng: ChaCha8Rng,
}

impl EvolutionState {
    pub fn new(mean: Vec<f64>, sigma: f64, lambda: Option<usize>, seed: u64) -> Result<Self, CmaError> {
        let d = mean.len();
        let consts = Constants::new(d, lambda.unwrap_or_else(|| default_lambda(d)))?;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(CmaError::BadSigma(sigma));
        }
        Ok(Self {
            consts,
            mean: DVector::from_vec(mean),
            sigma,
            cov: DMatrix::identity(d, d),
            p_sigma: DVector::zeros(d),
            p_c: DVector::zeros(d),
            generation: 0,
            basis: DMatrix::identity(d, d),
            scales: DVector::from_element(d, 1.0),
            condition: 1.0,
            rng: seed::rng(seed),
        })
    }

    pub fn dim(&self) -> usize {
        self.consts.dim
    }

    pub fn lambda(&self) -> usize {
        self.consts.lambda
    }

    /// Condition number of `C` from the latest decomposition.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.scales.iter().map(|s| s * s).collect()
    }

    /// Draws λ points `m + σ B D z`, `z ~ N(0, I)`.
    pub fn ask(&mut self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..self.lambda())
            .map(|_| {
                let z = DVector::from_fn(d, |_, _| self.rng.sample::<f64, _>(StandardNormal));
                let y = &self.basis * z.component_mul(&self.scales);
                (&self.mean + y * self.sigma).iter().copied().collect()
            })
            .collect()
    }

    /// Updates the distribution from the points returned by the last
    /// [`ask`](Self::ask) and their fitness (lower is better).
    ///
    /// When every fitness is equal the ranking carries no information: mean,
    /// paths, `C` and σ are left untouched and only the generation advances.
    pub fn tell(&mut self, xs: &[Vec<f64>], fitness: &[f64]) -> Result<(), CmaError> {
        let (d, lambda) = (self.dim(), self.lambda());
        if xs.len() != lambda || fitness.len() != lambda {
            return Err(CmaError::PopulationSize {
                expected: lambda,
                got: xs.len().min(fitness.len()),
            });
        }
        if let Some((index, x)) = xs.iter().enumerate().find(|(_, x)| x.len() != d) {
            return Err(CmaError::CandidateDimension { index, expected: d, got: x.len() });
        }
        if let Some(i) = fitness.iter().position(|f| !f.is_finite()) {
            return Err(CmaError::NonFinite(i));
        }
        self.generation += 1;
        if fitness.iter().all(|&f| f == fitness[0]) {
            return Ok(());
        }

        let mut order: Vec<usize> = (0..lambda).collect();
        order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]));
        let c = &self.consts;
        let ys: Vec<DVector<f64>> = order[..c.mu]
            .iter()
            .map(|&i| (DVector::from_column_slice(&xs[i]) - &self.mean) / self.sigma)
            .collect();
        let y_w = ys.iter().zip(&c.weights).fold(DVector::zeros(d), |acc, (y, w)| acc + y * *w);
        self.mean += &y_w * self.sigma;

        // C^{-1/2} y_w = B D^{-1} B^T y_w
        let inv_sqrt_y = &self.basis * (self.basis.transpose() * &y_w).component_div(&self.scales);
        self.p_sigma = &self.p_sigma * (1.0 - c.c_sigma) + inv_sqrt_y * (c.c_sigma * (2.0 - c.c_sigma) * c.mu_eff).sqrt();
        let ps_norm = self.p_sigma.norm();
        let decay = 1.0 - (1.0 - c.c_sigma).powi(2 * self.generation as i32);
        let h_sigma = ps_norm / decay.sqrt() < (1.4 + 2.0 / (d as f64 + 1.0)) * c.chi_n;
        let hs = if h_sigma { 1.0 } else { 0.0 };
        self.p_c = &self.p_c * (1.0 - c.c_c) + &y_w * (hs * (c.c_c * (2.0 - c.c_c) * c.mu_eff).sqrt());

        let delta = (1.0 - hs) * c.c_c * (2.0 - c.c_c);
        let mut rank_mu = DMatrix::zeros(d, d);
        for (y, w) in ys.iter().zip(&c.weights) {
            rank_mu += y * y.transpose() * *w;
        }
        let rank_one = &self.p_c * self.p_c.transpose();
        self.cov = &self.cov * (1.0 - c.c_1 - c.c_mu + c.c_1 * delta) + rank_one * c.c_1 + rank_mu * c.c_mu;
        self.cov = (&self.cov + self.cov.transpose()) * 0.5;

        self.sigma *= ((c.c_sigma / c.d_sigma) * (ps_norm / c.chi_n - 1.0)).exp();
        self.decompose()
    }

    fn decompose(&mut self) -> Result<(), CmaError> {
        let eig = SymmetricEigen::new(self.cov.clone());
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        self.condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if !self.condition.is_finite() || self.condition > MAX_CONDITION || !self.sigma.is_finite() || self.sigma <= 0.0 {
            return Err(CmaError::IllConditioned(self.condition));
        }
        self.basis = eig.eigenvectors;
        self.scales = eig.eigenvalues.map(f64::sqrt);
        Ok(())
    }
}

/// Clamps into `[0, 1]^d`; returns the clamped point and `‖x - clamp(x)‖²`.
pub fn clamp_unit(x: &[f64]) -> (Vec<f64>, f64) {
    let clamped: Vec<f64> = x.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let penalty = x.iter().zip(&clamped).map(|(a, b)| (a - b) * (a - b)).sum();
    (clamped, penalty)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimizeReport {
    pub best_x: Vec<f64>,
    pub best_f: f64,
    /// Evaluations spent when `best_f` first dropped below the target.
    pub hit_at: Option<usize>,
    pub evaluations: usize,
    pub generations: usize,
}

/// Unconstrained minimization until `f < target` or `max_evals` is spent.
pub fn minimize(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: Vec<f64>,
    sigma0: f64,
    lambda: Option<usize>,
    seed: u64,
    target: f64,
    max_evals: usize,
) -> Result<MinimizeReport, CmaError> {
    let mut es = EvolutionState::new(x0.clone(), sigma0, lambda, seed)?;
    let mut report = MinimizeReport {
        best_f: f(&x0),
        best_x: x0,
        hit_at: None,
        evaluations: 0,
        generations: 0,
    };
    while report.evaluations + es.lambda() <= max_evals {
        let xs = es.ask();
        let fit: Vec<f64> = xs.iter().map(|x| f(x)).collect();
        for (x, &v) in xs.iter().zip(&fit) {
            report.evaluations += 1;
            if v < report.best_f {
                report.best_f = v;
                report.best_x = x.clone();
            }
            if v < target && report.hit_at.is_none() {
                report.hit_at = Some(report.evaluations);
            }
        }
        report.generations += 1;
        if report.hit_at.is_some() {
            break;
        }
        match es.tell(&xs, &fit) {
            Ok(()) => {}
            Err(CmaError::IllConditioned(_)) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}
