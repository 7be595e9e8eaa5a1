//! Degree-two feature expansion and per-parameter aggregation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::space::FeatureLayout;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolyTerm {
    Linear(usize),
    Square(usize),
    /// Product of two distinct base columns, `a < b`.
    Product(usize, usize),
}

/// Expanded layout: the base columns, then their squares, then every pair `a < b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyLayout {
    pub base: FeatureLayout,
    pub terms: Vec<PolyTerm>,
}

impl PolyLayout {
    pub fn new(base: FeatureLayout) -> Self {
        let m = base.width();
        let mut terms: Vec<PolyTerm> = (0..m).map(PolyTerm::Linear).collect();
        terms.extend((0..m).map(PolyTerm::Square));
        for a in 0..m {
            for b in a + 1..m {
                terms.push(PolyTerm::Product(a, b));
            }
        }
        Self { base, terms }
    }

    pub fn width(&self) -> usize {
        self.terms.len()
    }

    /// Scene parameters a term depends on (one or two distinct indices).
    pub fn params_of(&self, t: usize) -> (usize, Option<usize>) {
        let p = |j: usize| self.base.columns[j].param;
        match self.terms[t] {
            PolyTerm::Linear(j) | PolyTerm::Square(j) => (p(j), None),
            PolyTerm::Product(a, b) if p(a) == p(b) => (p(a), None),
            PolyTerm::Product(a, b) => (p(a), Some(p(b))),
        }
    }

    pub fn term_name(&self, t: usize) -> String {
        match self.terms[t] {
            PolyTerm::Linear(j) => self.base.column_name(j),
            PolyTerm::Square(j) => format!("{}^2", self.base.column_name(j)),
            PolyTerm::Product(a, b) => format!("{}*{}", self.base.column_name(a), self.base.column_name(b)),
        }
    }

    /// Evaluates every term on the rows of `x` (columns in base layout order).
    pub fn expand(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), self.width(), |i, t| match self.terms[t] {
            PolyTerm::Linear(j) => x[(i, j)],
            PolyTerm::Square(j) => x[(i, j)] * x[(i, j)],
            PolyTerm::Product(a, b) => x[(i, a)] * x[(i, b)],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyWeight {
    pub total: f64,
    pub main: f64,
    pub interaction: f64,
}

/// `w_p = Σ |γ_f|` over terms involving `p`; single-parameter terms are main
/// effects, and two-parameter terms count toward the interaction of both.
pub fn aggregate_poly(layout: &PolyLayout, gamma: &[f64], n_params: usize) -> Vec<PolyWeight> {
    let mut main = vec![0.0; n_params];
    let mut inter = vec![0.0; n_params];
    for (t, g) in gamma.iter().enumerate() {
        match layout.params_of(t) {
            (p, None) => main[p] += g.abs(),
            (p, Some(q)) => {
                inter[p] += g.abs();
                inter[q] += g.abs();
            }
        }
    }
    main.iter()
        .zip(&inter)
        .map(|(&m, &i)| PolyWeight {
            total: m + i,
            main: m,
            interaction: i,
        })
        .collect()
}
