//! Surrogate regression of decision margins on encoded scene parameters.
//!
//! Every fit standardizes predictors and target on the rows it is trained on.
//! The polynomial pipeline standardizes the base columns, expands them to
//! degree two and standardizes the expanded columns again. Coefficients are
//! always in standardized units, so they compare across meshes and models.

pub mod linalg;
pub mod poly;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::{MarginRecord, ScoreKind};
use crate::seed;
use crate::space::{FeatureLayout, FeatureRole, ParamSpace, SceneParams, SpaceError};
use linalg::{mean_sd, predict, r_squared, Decomposition, Standardizer};
pub use poly::{aggregate_poly, PolyLayout, PolyTerm, PolyWeight};

/// Ridge penalties searched by generalized cross-validation.
pub const ALPHA_GRID: [f64; 7] = [1e-2, 1e-1, 1e0, 1e1, 1e2, 1e3, 1e4];
pub const DEFAULT_FOLDS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("design has {rows} rows but target has {targets}")]
    Shape { rows: usize, targets: usize },
    #[error("singular value decomposition did not converge")]
    Svd,
    #[error("invalid sweep sizes: {0}")]
    Sizes(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// Raw encoded features (one row per sample) and margins.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub layout: FeatureLayout,
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(layout: FeatureLayout, x: DMatrix<f64>, y: Vec<f64>) -> Result<Self, FitError> {
        if x.nrows() != y.len() {
            return Err(FitError::Shape {
                rows: x.nrows(),
                targets: y.len(),
            });
        }
        if x.ncols() != layout.width() {
            return Err(FitError::Shape {
                rows: x.ncols(),
                targets: layout.width(),
            });
        }
        Ok(Self { layout, x, y })
    }

    /// Encodes `(params, margin)` pairs.
    pub fn from_samples(space: &ParamSpace, samples: &[(SceneParams, f64)]) -> Result<Self, FitError> {
        let layout = space.feature_layout();
        let mut flat = Vec::with_capacity(samples.len() * layout.width());
        for (p, _) in samples {
            space.check(p)?;
            space.encode_into(p, &mut flat);
        }
        let x = DMatrix::from_row_slice(samples.len(), layout.width(), &flat);
        Self::new(layout, x, samples.iter().map(|(_, y)| *y).collect())
    }

    pub fn from_records(space: &ParamSpace, records: &[MarginRecord]) -> Result<Self, FitError> {
        let pairs: Vec<(SceneParams, f64)> = records.iter().map(|r| (r.params.clone(), r.margin)).collect();
        Self::from_samples(space, &pairs)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// The first `n` rows.
    pub fn prefix(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            layout: self.layout.clone(),
            x: self.x.rows(0, n).into_owned(),
            y: self.y[..n].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitKind {
    Linear,
    Polynomial,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Penalty {
    /// Minimum-norm least squares.
    None,
    /// Ridge with α chosen by GCV over the grid.
    Gcv(Vec<f64>),
    Fixed(f64),
}

impl FitKind {
    pub fn default_penalty(self) -> Penalty {
        match self {
            FitKind::Linear => Penalty::None,
            FitKind::Polynomial => Penalty::Gcv(ALPHA_GRID.to_vec()),
        }
    }
}

/// A model trained on a row subset, able to predict new rows.
#[derive(Debug, Clone)]
pub struct Trained {
    kind: FitKind,
    poly: Option<PolyLayout>,
    base: Standardizer,
    expanded: Option<Standardizer>,
    y_mean: f64,
    y_sd: f64,
    pub coefficients: Vec<f64>,
    pub alpha: Option<f64>,
    pub rank: usize,
    pub rank_deficient: bool,
    /// Target constant on the training rows.
    pub degenerate: bool,
    pub gcv: Vec<(f64, f64)>,
    /// Every grid point had `tr H / n` within rounding of 1.
    pub gcv_degenerate: bool,
    pub inactive: Vec<usize>,
}

impl Trained {
    fn design(&self, x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
        let xs = self.base.apply(x, rows);
        match (&self.poly, &self.expanded) {
            (Some(p), Some(st)) => {
                let z = p.expand(&xs);
                let all: Vec<usize> = (0..z.nrows()).collect();
                st.apply(&z, &all)
            }
            _ => xs,
        }
    }

    /// Predictions in the target's original units.
    pub fn predict(&self, x: &DMatrix<f64>, rows: &[usize]) -> Vec<f64> {
        let z = self.design(x, rows);
        predict(&z, &self.coefficients).iter().map(|v| self.y_mean + self.y_sd * v).collect()
    }

    pub fn kind(&self) -> FitKind {
        self.kind
    }
}

/// Fits on `rows` of `data` with every statistic taken from those rows only.
pub fn train(kind: FitKind, penalty: &Penalty, data: &Dataset, rows: &[usize]) -> Result<Trained, FitError> {
    if rows.len() < 2 {
        return Err(FitError::TooFewSamples { need: 2, got: rows.len() });
    }
    let base = Standardizer::fit(&data.x, rows);
    let xs = base.apply(&data.x, rows);
    let (poly, expanded, z) = match kind {
        FitKind::Linear => (None, None, xs),
        FitKind::Polynomial => {
            let p = PolyLayout::new(data.layout.clone());
            let raw = p.expand(&xs);
            let all: Vec<usize> = (0..raw.nrows()).collect();
            let st = Standardizer::fit(&raw, &all);
            let z = st.apply(&raw, &all);
            (Some(p), Some(st), z)
        }
    };
    let active = expanded.as_ref().unwrap_or(&base).active();
    let width = z.ncols();
    let inactive = (0..width).filter(|j| !active.contains(j)).collect();
    let (y_mean, y_sd) = mean_sd(rows.iter().map(|&i| data.y[i]));
    let mut out = Trained {
        kind,
        poly,
        base,
        expanded,
        y_mean,
        y_sd,
        coefficients: vec![0.0; width],
        alpha: None,
        rank: 0,
        rank_deficient: false,
        degenerate: y_sd == 0.0,
        gcv: Vec::new(),
        gcv_degenerate: false,
        inactive,
    };
    if out.degenerate || active.is_empty() {
        out.rank_deficient = active.is_empty();
        return Ok(out);
    }
    let sub = z.select_columns(&active);
    let y: Vec<f64> = rows.iter().map(|&i| (data.y[i] - y_mean) / y_sd).collect();
    let dec = Decomposition::new(&sub, &y)?;
    out.rank = dec.rank();
    out.rank_deficient = out.rank < active.len();
    let coef = match penalty {
        Penalty::None => dec.ols(),
        Penalty::Fixed(a) => {
            out.alpha = Some(*a);
            dec.ridge(*a).coefficients
        }
        Penalty::Gcv(grid) => {
            let sols: Vec<_> = grid.iter().map(|&a| dec.ridge(a)).collect();
            let n = rows.len() as f64;
            out.gcv_degenerate = sols.iter().all(|s| (n - s.dof) / n < 1e-9);
            out.gcv = sols.iter().map(|s| (s.alpha, s.gcv)).collect();
            let best = sols
                .into_iter()
                .reduce(|a, b| if b.gcv < a.gcv { b } else { a })
                .expect("alpha grid is not empty");
            out.alpha = Some(best.alpha);
            best.coefficients
        }
    };
    for (&j, c) in active.iter().zip(coef) {
        out.coefficients[j] = c;
    }
    Ok(out)
}

/// Fold index of every row: a seeded permutation dealt round-robin into
/// `folds` near-equal parts.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seed::rng(seed::split(seed, seed::stream::CV_FOLDS)));
    let mut fold = vec![0; n];
    for (i, &row) in perm.iter().enumerate() {
        fold[row] = i % folds;
    }
    fold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub kind: FitKind,
    pub feature_names: Vec<String>,
    /// Full-data fit.
    pub coefficients: Vec<f64>,
    /// Ridge penalty of the full-data fit; `None` for least squares.
    pub alpha: Option<f64>,
    /// Mean held-out R²; `None` when undefined.
    pub cv_r2: Option<f64>,
    pub per_fold_r2: Vec<Option<f64>>,
    pub per_fold_train_r2: Vec<Option<f64>>,
    pub per_fold_alpha: Vec<Option<f64>>,
    pub n_samples: usize,
    pub rank: usize,
    pub rank_deficient: bool,
    pub degenerate: bool,
    pub gcv_degenerate: bool,
    pub zero_variance_columns: Vec<usize>,
    pub gcv: Vec<(f64, f64)>,
}

/// K-fold cross-validated fit plus the full-data fit.
pub fn cross_validate(kind: FitKind, penalty: &Penalty, data: &Dataset, folds: usize, seed: u64) -> Result<FitResult, FitError> {
    let n = data.len();
    if folds < 2 || n < folds {
        return Err(FitError::TooFewSamples {
            need: folds.max(2),
            got: n,
        });
    }
    let assignment = fold_assignment(n, folds, seed);
    let mut per_fold_r2 = Vec::with_capacity(folds);
    let mut per_fold_train_r2 = Vec::with_capacity(folds);
    let mut per_fold_alpha = Vec::with_capacity(folds);
    for k in 0..folds {
        let (test, train_rows): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| assignment[i] == k);
        let t = train(kind, penalty, data, &train_rows)?;
        let r2 = |rows: &[usize]| {
            let y: Vec<f64> = rows.iter().map(|&i| data.y[i]).collect();
            r_squared(&y, &t.predict(&data.x, rows))
        };
        per_fold_r2.push(if t.degenerate { None } else { r2(&test) });
        per_fold_train_r2.push(if t.degenerate { None } else { r2(&train_rows) });
        per_fold_alpha.push(t.alpha);
    }
    let all: Vec<usize> = (0..n).collect();
    let full = train(kind, penalty, data, &all)?;
    let cv_r2 = if full.degenerate {
        None
    } else {
        per_fold_r2
            .iter()
            .copied()
            .collect::<Option<Vec<f64>>>()
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
    };
    let feature_names = match &full.poly {
        Some(p) => (0..p.width()).map(|t| p.term_name(t)).collect(),
        None => (0..data.layout.width()).map(|j| data.layout.column_name(j)).collect(),
    };
    Ok(FitResult {
        kind,
        feature_names,
        coefficients: full.coefficients,
        alpha: full.alpha,
        cv_r2,
        per_fold_r2,
        per_fold_train_r2,
        per_fold_alpha,
        n_samples: n,
        rank: full.rank,
        rank_deficient: full.rank_deficient,
        degenerate: full.degenerate,
        gcv_degenerate: full.gcv_degenerate,
        zero_variance_columns: full.inactive,
        gcv: full.gcv,
    })
}

/// Standardized least squares with 10-fold cross-validation.
pub fn fit_ols(data: &Dataset, seed: u64) -> Result<FitResult, FitError> {
    cross_validate(FitKind::Linear, &Penalty::None, data, DEFAULT_FOLDS, seed)
}

/// Degree-two ridge with GCV-selected α and 10-fold cross-validation.
pub fn fit_ridge_gcv(data: &Dataset, seed: u64) -> Result<FitResult, FitError> {
    cross_validate(FitKind::Polynomial, &FitKind::Polynomial.default_penalty(), data, DEFAULT_FOLDS, seed)
}

/// One magnitude per parameter: `|β|` for linear parameters and
/// `√(β_cos² + β_sin²)` for circular ones.
pub fn fold_circular(layout: &FeatureLayout, beta: &[f64]) -> Vec<f64> {
    let mut sq = vec![0.0; layout.param_names.len()];
    for (c, b) in layout.columns.iter().zip(beta) {
        sq[c.param] += b * b;
    }
    sq.into_iter().map(f64::sqrt).collect()
}

/// Like [`fold_circular`] but keeps the sign of linear parameters.
pub fn signed_weights(layout: &FeatureLayout, beta: &[f64]) -> Vec<f64> {
    let mut out = fold_circular(layout, beta);
    for (c, b) in layout.columns.iter().zip(beta) {
        if c.role == FeatureRole::Raw {
            out[c.param] = *b;
        }
    }
    out
}

/// Per-parameter summary of one (model, mesh) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityProfile {
    pub model_id: String,
    pub mesh_id: String,
    pub params: Vec<String>,
    pub score: ScoreKind,
    pub linear_weight: Vec<f64>,
    /// Signed for linear parameters, magnitude for circular ones.
    pub linear_signed: Vec<f64>,
    pub poly: Vec<PolyWeight>,
    pub linear: FitResult,
    pub polynomial: FitResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub model_id: String,
    pub mesh_id: String,
    pub parameter: String,
    pub linear_weight: f64,
    pub poly_weight: f64,
    pub main: f64,
    pub interaction: f64,
    pub cv_r2_linear: Option<f64>,
    pub cv_r2_poly: Option<f64>,
}

impl SensitivityProfile {
    pub fn rows(&self) -> Vec<ProfileRow> {
        self.params
            .iter()
            .enumerate()
            .map(|(p, name)| ProfileRow {
                model_id: self.model_id.clone(),
                mesh_id: self.mesh_id.clone(),
                parameter: name.clone(),
                linear_weight: self.linear_weight[p],
                poly_weight: self.poly[p].total,
                main: self.poly[p].main,
                interaction: self.poly[p].interaction,
                cv_r2_linear: self.linear.cv_r2,
                cv_r2_poly: self.polynomial.cv_r2,
            })
            .collect()
    }
}

/// Linear and polynomial fits sharing one fold assignment.
pub fn profile(model_id: &str, mesh_id: &str, data: &Dataset, seed: u64) -> Result<SensitivityProfile, FitError> {
    let linear = fit_ols(data, seed)?;
    let polynomial = fit_ridge_gcv(data, seed)?;
    let n_params = data.layout.param_names.len();
    let poly_layout = PolyLayout::new(data.layout.clone());
    Ok(SensitivityProfile {
        model_id: model_id.to_string(),
        mesh_id: mesh_id.to_string(),
        params: data.layout.param_names.clone(),
        score: ScoreKind::Margin,
        linear_weight: fold_circular(&data.layout, &linear.coefficients),
        linear_signed: signed_weights(&data.layout, &linear.coefficients),
        poly: aggregate_poly(&poly_layout, &polynomial.coefficients, n_params),
        linear,
        polynomial,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n: usize,
    /// Folded linear weights or aggregated polynomial weights.
    pub weights: Vec<f64>,
    pub cv_r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSweep {
    pub kind: FitKind,
    pub params: Vec<String>,
    pub points: Vec<SweepPoint>,
    /// `|w(n_last) - w(n_prev)| / w(n_prev)` per parameter.
    pub relative_change: Option<Vec<f64>>,
}

/// Refits on nested prefixes of the sample list.
pub fn convergence_sweep(data: &Dataset, kind: FitKind, sizes: &[usize], seed: u64) -> Result<ConvergenceSweep, FitError> {
    if sizes.is_empty() {
        return Err(FitError::Sizes("no sizes".into()));
    }
    if sizes.windows(2).any(|w| w[1] < w[0]) {
        return Err(FitError::Sizes("sizes must be non-decreasing".into()));
    }
    if let Some(&max) = sizes.last().filter(|&&m| m > data.len()) {
        return Err(FitError::Sizes(format!("size {max} exceeds {} samples", data.len())));
    }
    let n_params = data.layout.param_names.len();
    let poly_layout = PolyLayout::new(data.layout.clone());
    let points = sizes
        .iter()
        .map(|&n| {
            let fit = cross_validate(kind, &kind.default_penalty(), &data.prefix(n), DEFAULT_FOLDS, seed)?;
            let weights = match kind {
                FitKind::Linear => fold_circular(&data.layout, &fit.coefficients),
                FitKind::Polynomial => aggregate_poly(&poly_layout, &fit.coefficients, n_params).iter().map(|w| w.total).collect(),
            };
            Ok(SweepPoint { n, weights, cv_r2: fit.cv_r2 })
        })
        .collect::<Result<Vec<_>, FitError>>()?;
    let relative_change = (points.len() >= 2).then(|| {
        let (prev, last) = (&points[points.len() - 2], &points[points.len() - 1]);
        prev.weights
            .iter()
            .zip(&last.weights)
            .map(|(&a, &b)| if a == b { 0.0 } else { (b - a).abs() / a.abs() })
            .collect()
    });
    Ok(ConvergenceSweep {
        kind,
        params: data.layout.param_names.clone(),
        points,
        relative_change,
    })
}
