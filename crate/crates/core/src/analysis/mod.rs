//! Cross-model and cross-class analytics.
//!
//! Coefficient matrices (meshes × parameters) are compared by Frobenius
//! distance and clustered with Ward's linkage; accuracy heatmaps get their
//! row and column orderings from the same clustering. The taxonomy side
//! lives in [`taxonomy`] and the depth-inclusion model in [`logistic`].

pub mod cluster;
pub mod logistic;
pub mod taxonomy;

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::sensitivity::SensitivityProfile;

pub use cluster::{cut_tree, ward_cluster, ward_rows, ClusterTree, Merge};
pub use logistic::{fit_logistic, LogisticError, LogisticFit};
pub use taxonomy::{medoid, Coverage, Medoid, TaxonomyError, TaxonomyTree};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("need at least {need} items, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("model {model}: {what} ordering differs from model {reference}")]
    Ordering { model: String, reference: String, what: &'static str },
    #[error("{0}")]
    Shape(String),
    #[error("cell ({row}, {col}) has no records")]
    EmptyCell { row: usize, col: usize },
    #[error("distance matrix is not symmetric with zero diagonal")]
    NotADistance,
}

/// Which per-parameter weight fills a coefficient matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Folded linear weights.
    Linear,
    /// Aggregated polynomial weights `w_p`.
    Polynomial,
}

/// One model's weights: rows are meshes, columns scene parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientMatrix {
    pub model_id: String,
    pub meshes: Vec<String>,
    pub params: Vec<String>,
    pub values: DMatrix<f64>,
}

impl CoefficientMatrix {
    pub fn new(model_id: impl Into<String>, meshes: Vec<String>, params: Vec<String>, values: DMatrix<f64>) -> Result<Self, AnalysisError> {
        if values.shape() != (meshes.len(), params.len()) {
            return Err(AnalysisError::Shape(format!(
                "values are {:?}, labels are {}x{}",
                values.shape(),
                meshes.len(),
                params.len()
            )));
        }
        Ok(Self {
            model_id: model_id.into(),
            meshes,
            params,
            values,
        })
    }

    /// Stacks one profile per mesh in the given order. All profiles must
    /// share the model id and parameter list.
    pub fn from_profiles(profiles: &[&SensitivityProfile], weighting: Weighting) -> Result<Self, AnalysisError> {
        let first = profiles.first().ok_or(AnalysisError::TooFew { need: 1, got: 0 })?;
        let params = first.params.clone();
        for p in profiles {
            if p.model_id != first.model_id {
                return Err(AnalysisError::Shape(format!("mixed models {} and {}", first.model_id, p.model_id)));
            }
            if p.params != params {
                return Err(AnalysisError::Ordering {
                    model: p.model_id.clone(),
                    reference: first.model_id.clone(),
                    what: "parameter",
                });
            }
        }
        let values = DMatrix::from_fn(profiles.len(), params.len(), |i, j| match weighting {
            Weighting::Linear => profiles[i].linear_weight[j],
            Weighting::Polynomial => profiles[i].poly[j].total,
        });
        let meshes = profiles.iter().map(|p| p.mesh_id.clone()).collect();
        Self::new(first.model_id.clone(), meshes, params, values)
    }
}

/// Symmetric, zero-diagonal matrix of pairwise distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub labels: Vec<String>,
    pub values: DMatrix<f64>,
}

impl DistanceMatrix {
    pub fn new(labels: Vec<String>, values: DMatrix<f64>) -> Result<Self, AnalysisError> {
        let n = labels.len();
        if values.shape() != (n, n) {
            return Err(AnalysisError::Shape(format!("{} labels for a {:?} matrix", n, values.shape())));
        }
        for i in 0..n {
            if values[(i, i)] != 0.0 {
                return Err(AnalysisError::NotADistance);
            }
            for j in 0..i {
                let d = values[(i, j)];
                if d != values[(j, i)] || d.is_nan() || d < 0.0 {
                    return Err(AnalysisError::NotADistance);
                }
            }
        }
        Ok(Self { labels, values })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    /// Fills the matrix from `f(i, j)` for each pair `i < j`.
    pub fn from_pairs(labels: Vec<String>, f: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        let n = labels.len();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        #[cfg(feature = "parallel")]
        let it = pairs.par_iter();
        #[cfg(not(feature = "parallel"))]
        let it = pairs.iter();
        let d: Vec<f64> = it.map(|&(i, j)| f(i, j)).collect();
        let mut values = DMatrix::zeros(n, n);
        for (&(i, j), v) in pairs.iter().zip(d) {
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
        Self { labels, values }
    }

    /// Header row of labels, then one labelled row per item.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("label");
        for l in &self.labels {
            let _ = write!(s, ",{l}");
        }
        s.push('\n');
        for (i, l) in self.labels.iter().enumerate() {
            s.push_str(l);
            for j in 0..self.len() {
                let _ = write!(s, ",{}", self.values[(i, j)]);
            }
            s.push('\n');
        }
        s
    }

    pub fn reordered(&self, order: &[usize]) -> Self {
        Self {
            labels: order.iter().map(|&i| self.labels[i].clone()).collect(),
            values: DMatrix::from_fn(order.len(), order.len(), |i, j| self.values[(order[i], order[j])]),
        }
    }
}

/// `D_ab = ‖M_a − M_b‖_F` over models that share mesh and parameter orderings.
pub fn model_dissimilarity(matrices: &[CoefficientMatrix]) -> Result<DistanceMatrix, AnalysisError> {
    let first = matrices.first().ok_or(AnalysisError::TooFew { need: 1, got: 0 })?;
    for m in matrices {
        let mismatch = |what| AnalysisError::Ordering {
            model: m.model_id.clone(),
            reference: first.model_id.clone(),
            what,
        };
        if m.meshes != first.meshes {
            return Err(mismatch("mesh"));
        }
        if m.params != first.params {
            return Err(mismatch("parameter"));
        }
    }
    let labels = matrices.iter().map(|m| m.model_id.clone()).collect();
    Ok(DistanceMatrix::from_pairs(labels, |a, b| (&matrices[a].values - &matrices[b].values).norm()))
}

/// Euclidean distances between the rows of `x`.
pub fn row_distances(labels: Vec<String>, x: &DMatrix<f64>) -> DistanceMatrix {
    DistanceMatrix::from_pairs(labels, |a, b| (x.row(a) - x.row(b)).norm())
}

/// How the records of one cell are reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellReduce {
    Mean,
    Max,
}

/// Top-1 accuracy per (model, class) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    pub models: Vec<String>,
    pub classes: Vec<String>,
    pub reduce: CellReduce,
    pub values: DMatrix<f64>,
    /// Population variance across models, per class.
    pub class_variance: Vec<f64>,
}

impl AccuracyMatrix {
    /// `cells[m][c]` holds the `top1_correct` flags for model `m`, class `c`.
    pub fn new(models: Vec<String>, classes: Vec<String>, cells: &[Vec<Vec<bool>>], reduce: CellReduce) -> Result<Self, AnalysisError> {
        if cells.len() != models.len() || cells.iter().any(|r| r.len() != classes.len()) {
            return Err(AnalysisError::Shape(format!("expected {}x{} cells", models.len(), classes.len())));
        }
        let mut values = DMatrix::zeros(models.len(), classes.len());
        for (m, row) in cells.iter().enumerate() {
            for (c, flags) in row.iter().enumerate() {
                if flags.is_empty() {
                    return Err(AnalysisError::EmptyCell { row: m, col: c });
                }
                let hits = flags.iter().filter(|&&b| b).count();
                values[(m, c)] = match reduce {
                    CellReduce::Mean => hits as f64 / flags.len() as f64,
                    CellReduce::Max => (hits > 0) as u8 as f64,
                };
            }
        }
        let class_variance = (0..classes.len())
            .map(|c| {
                let col = values.column(c);
                let mean = col.mean();
                col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / col.len() as f64
            })
            .collect();
        Ok(Self {
            models,
            classes,
            reduce,
            values,
            class_variance,
        })
    }

    /// Ward leaf order of the model rows.
    pub fn row_order(&self) -> Vec<usize> {
        order_rows(&self.values)
    }

    /// Ward leaf order of the class columns.
    pub fn column_order(&self) -> Vec<usize> {
        order_rows(&self.values.transpose())
    }

    pub fn heatmap(&self, rows: &[usize], cols: &[usize]) -> Heatmap {
        Heatmap {
            row_labels: rows.iter().map(|&i| self.models[i].clone()).collect(),
            col_labels: cols.iter().map(|&j| self.classes[j].clone()).collect(),
            values: rows.iter().map(|&i| cols.iter().map(|&j| self.values[(i, j)]).collect()).collect(),
            strip: Some(cols.iter().map(|&j| self.class_variance[j]).collect()),
        }
    }
}

fn order_rows(x: &DMatrix<f64>) -> Vec<usize> {
    match x.nrows() {
        0 => vec![],
        1 => vec![0],
        _ => ward_rows(x).leaf_order(),
    }
}

/// Plot-ready grid in display order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strip: Option<Vec<f64>>,
}

impl Heatmap {
    pub fn from_distances(d: &DistanceMatrix, order: &[usize]) -> Self {
        let r = d.reordered(order);
        Self {
            row_labels: r.labels.clone(),
            col_labels: r.labels,
            values: (0..order.len()).map(|i| r.values.row(i).iter().copied().collect()).collect(),
            strip: None,
        }
    }
}
