//! Parameter-driven oracles with known sensitivity structure.
//!
//! Both oracles score a scene from its *population-standardized* features:
//! a linear parameter uniform on `[low, high]` is centered at the midpoint
//! and divided by `span / √12`, and a `(cos θ, sin θ)` pair of a uniform
//! angle is multiplied by `√2`. Under uniform (or LHS) sampling every
//! feature then has mean 0 and variance 1 and the features are uncorrelated.
//!
//! The emitted logits are `(y/2, -y/2)`, so the margin of class 0 is `y`.
//! Noise is a pure function of the query values and the seed, which keeps the
//! oracles reentrant and resumable.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{LogitVector, Oracle, OracleDescriptor, OracleError, OracleInput, OracleKind, Query};
use crate::seed;
use crate::space::{FeatureLayout, FeatureRole, ParamSpace, SceneParams};

/// Standardized regression features of `p` (layout = `space.feature_layout()`).
pub fn standardized_features(space: &ParamSpace, p: &SceneParams) -> Vec<f64> {
    let layout = space.feature_layout();
    let mut raw = Vec::with_capacity(layout.width());
    space.encode_into(p, &mut raw);
    layout
        .columns
        .iter()
        .zip(raw)
        .map(|(c, v)| match c.role {
            FeatureRole::Raw => {
                let s = &space.specs[c.param];
                (v - 0.5 * (s.low + s.high)) / (s.span() / 12f64.sqrt())
            }
            FeatureRole::Cos | FeatureRole::Sin => v * std::f64::consts::SQRT_2,
        })
        .collect()
}

fn noise(seed: u64, sd: f64, p: &SceneParams) -> f64 {
    if sd == 0.0 {
        return 0.0;
    }
    let key = seed::hash_words(seed::split(seed, seed::stream::ORACLE_NOISE), p.values.iter().map(|v| v.to_bits()));
    let z: f64 = seed::rng(key).sample(StandardNormal);
    sd * z
}

fn two_class(y: f64) -> Result<LogitVector, OracleError> {
    LogitVector::new(vec![0.5 * y, -0.5 * y])
}

/// Ground truth of a synthetic oracle. Exposed only through the concrete
/// oracle types, never through [`Oracle`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub layout: FeatureLayout,
    pub weights: Vec<f64>,
    pub quadratic: Vec<(usize, usize, f64)>,
    pub noise_sd: f64,
}

impl GroundTruth {
    /// Variance of the noiseless margin under the uniform design.
    ///
    /// Exact for linear terms; for quadratic terms it assumes the standardized
    /// features are independent, which holds across distinct parameters but
    /// only approximately for a circular `(cos, sin)` pair.
    pub fn signal_variance(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }

    /// Fraction of margin variance explained by the signal, `Σw² / (Σw² + σ²)`.
    pub fn signal_fraction(&self) -> f64 {
        let s = self.signal_variance();
        s / (s + self.noise_sd * self.noise_sd)
    }

    /// Coefficients a standardized-target regression converges to: `w / sd(y)`.
    pub fn standardized_weights(&self) -> Vec<f64> {
        let sd = (self.signal_variance() + self.noise_sd * self.noise_sd).sqrt();
        self.weights.iter().map(|w| w / sd).collect()
    }
}

/// Margin `y = Σ w_j f_j + ε` over standardized features `f`.
#[derive(Debug, Clone)]
pub struct LinearOracle {
    desc: OracleDescriptor,
    space: ParamSpace,
    weights: Vec<f64>,
    noise_sd: f64,
    seed: u64,
}

impl LinearOracle {
    pub fn new(id: impl Into<String>, space: &ParamSpace, weights: Vec<f64>, noise_sd: f64, seed: u64) -> Result<Self, OracleError> {
        let width = space.feature_layout().width();
        if weights.len() != width {
            return Err(OracleError::LayoutMismatch {
                expected: width,
                got: weights.len(),
            });
        }
        Ok(Self {
            desc: OracleDescriptor {
                kind: OracleKind::SyntheticLinear,
                id: id.into(),
                class_count: 2,
                metadata: serde_json::json!({ "noise_sd": noise_sd, "seed": seed }),
            },
            space: space.clone(),
            weights,
            noise_sd,
            seed,
        })
    }

    /// Weights drawn uniformly from `[-1, 1]`.
    pub fn random(id: impl Into<String>, space: &ParamSpace, noise_sd: f64, seed: u64) -> Self {
        let mut rng = seed::rng(seed::split(seed, seed::stream::ORACLE_WEIGHTS));
        let weights = (0..space.feature_layout().width()).map(|_| rng.random_range(-1.0..=1.0)).collect();
        Self::new(id, space, weights, noise_sd, seed).expect("width matches layout")
    }

    pub fn margin_at(&self, p: &SceneParams) -> f64 {
        let f = standardized_features(&self.space, p);
        let y: f64 = f.iter().zip(&self.weights).map(|(a, b)| a * b).sum();
        y + noise(self.seed, self.noise_sd, p)
    }

    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            layout: self.space.feature_layout(),
            weights: self.weights.clone(),
            quadratic: Vec::new(),
            noise_sd: self.noise_sd,
        }
    }
}

impl Oracle for LinearOracle {
    fn descriptor(&self) -> &OracleDescriptor {
        &self.desc
    }

    fn input(&self) -> OracleInput {
        OracleInput::Params
    }

    fn query(&mut self, batch: &[Query<'_>]) -> Result<Vec<LogitVector>, OracleError> {
        batch
            .iter()
            .map(|q| {
                self.space.check(q.params)?;
                two_class(self.margin_at(q.params))
            })
            .collect()
    }
}

/// Margin `y = Σ w_j f_j + Σ q_ab f_a f_b + ε` over standardized features.
#[derive(Debug, Clone)]
pub struct QuadraticOracle {
    desc: OracleDescriptor,
    space: ParamSpace,
    linear: Vec<f64>,
    terms: Vec<(usize, usize, f64)>,
    noise_sd: f64,
    seed: u64,
}

impl QuadraticOracle {
    pub fn new(
        id: impl Into<String>,
        space: &ParamSpace,
        linear: Vec<f64>,
        terms: Vec<(usize, usize, f64)>,
        noise_sd: f64,
        seed: u64,
    ) -> Result<Self, OracleError> {
        let width = space.feature_layout().width();
        if linear.len() != width {
            return Err(OracleError::LayoutMismatch {
                expected: width,
                got: linear.len(),
            });
        }
        if let Some(&(a, b, _)) = terms.iter().find(|(a, b, _)| *a >= width || *b >= width) {
            return Err(OracleError::LayoutMismatch {
                expected: width,
                got: a.max(b) + 1,
            });
        }
        Ok(Self {
            desc: OracleDescriptor {
                kind: OracleKind::SyntheticQuadratic,
                id: id.into(),
                class_count: 2,
                metadata: serde_json::json!({ "noise_sd": noise_sd, "seed": seed, "terms": terms.len() }),
            },
            space: space.clone(),
            linear,
            terms,
            noise_sd,
            seed,
        })
    }

    /// Random linear weights in `[-0.5, 0.5]`, a squared term in `[-1, 1]` on
    /// every raw (non-circular) feature and three random pairwise products.
    pub fn random(id: impl Into<String>, space: &ParamSpace, noise_sd: f64, seed: u64) -> Self {
        let layout = space.feature_layout();
        let width = layout.width();
        let mut rng = seed::rng(seed::split(seed, seed::stream::ORACLE_WEIGHTS));
        let linear = (0..width).map(|_| rng.random_range(-0.5..=0.5)).collect();
        let mut terms = Vec::new();
        for (j, c) in layout.columns.iter().enumerate() {
            if c.role == FeatureRole::Raw {
                terms.push((j, j, rng.random_range(-1.0..=1.0)));
            }
        }
        for _ in 0..3 {
            let a = rng.random_range(0..width);
            let b = rng.random_range(0..width);
            terms.push((a.min(b), a.max(b), rng.random_range(-1.0..=1.0)));
        }
        Self::new(id, space, linear, terms, noise_sd, seed).expect("indices within layout")
    }

    pub fn margin_at(&self, p: &SceneParams) -> f64 {
        let f = standardized_features(&self.space, p);
        let lin: f64 = f.iter().zip(&self.linear).map(|(a, b)| a * b).sum();
        let quad: f64 = self.terms.iter().map(|&(a, b, q)| q * f[a] * f[b]).sum();
        lin + quad + noise(self.seed, self.noise_sd, p)
    }

    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            layout: self.space.feature_layout(),
            weights: self.linear.clone(),
            quadratic: self.terms.clone(),
            noise_sd: self.noise_sd,
        }
    }
}

impl Oracle for QuadraticOracle {
    fn descriptor(&self) -> &OracleDescriptor {
        &self.desc
    }

    fn input(&self) -> OracleInput {
        OracleInput::Params
    }

    fn query(&mut self, batch: &[Query<'_>]) -> Result<Vec<LogitVector>, OracleError> {
        batch
            .iter()
            .map(|q| {
                self.space.check(q.params)?;
                two_class(self.margin_at(q.params))
            })
            .collect()
    }
}
