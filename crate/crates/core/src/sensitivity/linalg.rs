//! Column standardization and SVD-based least squares.

use nalgebra::{DMatrix, DVector, SVD};

use super::FitError;

/// Column means and population standard deviations of a row subset.
/// Columns whose spread is negligible are inactive: they standardize to 0
/// and never enter a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

/// Relative spread below which a column counts as constant.
const ZERO_VARIANCE: f64 = 1e-12;

pub(crate) fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    (mean, if sd <= ZERO_VARIANCE * (1.0 + mean.abs()) { 0.0 } else { sd })
}

impl Standardizer {
    pub fn fit(x: &DMatrix<f64>, rows: &[usize]) -> Self {
        let (mean, sd) = (0..x.ncols()).map(|j| mean_sd(rows.iter().map(|&i| x[(i, j)]))).unzip();
        Self { mean, sd }
    }

    pub fn is_active(&self, j: usize) -> bool {
        self.sd[j] > 0.0
    }

    pub fn active(&self) -> Vec<usize> {
        (0..self.sd.len()).filter(|&j| self.is_active(j)).collect()
    }

    /// Standardized copy of `rows`, all columns kept.
    pub fn apply(&self, x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), x.ncols(), |r, j| {
            if self.is_active(j) {
                (x[(rows[r], j)] - self.mean[j]) / self.sd[j]
            } else {
                0.0
            }
        })
    }
}

/// Thin SVD of a design, `Z = Q R` with `R = U_r S Vᵀ`, together with
/// `c = (Q U_r)ᵀ y`. Tall designs are reduced by QR first so the SVD runs on
/// the small square factor.
pub struct Decomposition {
    z: DMatrix<f64>,
    s: DVector<f64>,
    v_t: DMatrix<f64>,
    c: DVector<f64>,
    y: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeSolution {
    pub alpha: f64,
    pub coefficients: Vec<f64>,
    pub gcv: f64,
    pub dof: f64,
}

impl Decomposition {
    pub fn new(z: &DMatrix<f64>, y: &[f64]) -> Result<Self, FitError> {
        let yv = DVector::from_column_slice(y);
        let (core, rhs) = if z.nrows() > z.ncols() {
            let qr = z.clone().qr();
            let mut qty = yv.clone();
            qr.q_tr_mul(&mut qty);
            (qr.r(), qty.rows(0, z.ncols()).into_owned())
        } else {
            (z.clone(), yv.clone())
        };
        let svd = SVD::try_new(core, true, true, f64::EPSILON, 0).ok_or(FitError::Svd)?;
        let u = svd.u.ok_or(FitError::Svd)?;
        let v_t = svd.v_t.ok_or(FitError::Svd)?;
        let c = u.transpose() * rhs;
        Ok(Self {
            z: z.clone(),
            s: svd.singular_values,
            v_t,
            c,
            y: yv,
        })
    }

    fn n(&self) -> f64 {
        self.y.len() as f64
    }

    fn tolerance(&self) -> f64 {
        let (n, p) = self.z.shape();
        self.s.max() * n.max(p) as f64 * f64::EPSILON
    }

    pub fn rank(&self) -> usize {
        let tol = self.tolerance();
        self.s.iter().filter(|&&s| s > tol).count()
    }

    fn combine(&self, scale: impl Fn(f64) -> f64) -> Vec<f64> {
        let scaled = DVector::from_fn(self.s.len(), |i, _| scale(self.s[i]) * self.c[i]);
        (self.v_t.transpose() * scaled).iter().copied().collect()
    }

    /// Minimum-norm least squares; singular values under the tolerance are dropped.
    pub fn ols(&self) -> Vec<f64> {
        let tol = self.tolerance();
        self.combine(|s| if s > tol { 1.0 / s } else { 0.0 })
    }

    /// `(ZᵀZ + αI)⁻¹ Zᵀy` with `GCV(α) = n·RSS / (n - tr H)²`.
    pub fn ridge(&self, alpha: f64) -> RidgeSolution {
        let coefficients = self.combine(|s| s / (s * s + alpha));
        let dof: f64 = self.s.iter().map(|s| s * s / (s * s + alpha)).sum();
        let fitted = &self.z * DVector::from_column_slice(&coefficients);
        let rss = (&self.y - fitted).norm_squared();
        let n = self.n();
        RidgeSolution {
            alpha,
            coefficients,
            gcv: n * rss / ((n - dof) * (n - dof)),
            dof,
        }
    }
}

/// `x · β` for the standardized rows.
pub fn predict(x: &DMatrix<f64>, beta: &[f64]) -> Vec<f64> {
    (x * DVector::from_column_slice(beta)).iter().copied().collect()
}

/// Held-out `R² = 1 - Σ(y - ŷ)² / Σ(y - ȳ)²` with `ȳ` the mean of `y` itself.
/// `None` when `y` is constant.
pub fn r_squared(y: &[f64], yhat: &[f64]) -> Option<f64> {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if tot == 0.0 {
        return None;
    }
    let res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Some(1.0 - res / tot)
}
