//! Oracles: anything that maps a scene (or its rendered image) to class logits.
//!
//! Two scores derived from logits live here and must not be mixed inside one
//! analysis: the decision [`margin`] (used for regression) and the target
//! [`log_prob`] (used as the CMA-ES objective).

pub mod external;
pub mod protocol;
pub mod synthetic;
pub mod template;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::render::{self, Image, Mesh, RenderOptions};
use crate::space::{ParamSpace, SceneParams, SpaceError};

pub use external::{Endpoint, ExternalOracle};
pub use synthetic::{LinearOracle, QuadraticOracle};
pub use template::TemplateClassifier;

/// Which score an analysis is built on; recorded in run metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreKind {
    /// `z_c - max_{i≠c} z_i` on pre-softmax logits.
    Margin,
    /// `z_c - log Σ exp z_k`.
    LogSoftmax,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("logit vector needs at least two classes, got {0}")]
    TooFewClasses(usize),
    #[error("non-finite logit at index {0}")]
    NonFinite(usize),
    #[error("class index {class} out of range for {count} classes")]
    ClassOutOfRange { class: usize, count: usize },
    #[error("oracle {0} needs rendered images")]
    MissingImage(String),
    #[error("coefficient vector has {got} entries, layout has {expected}")]
    LayoutMismatch { expected: usize, got: usize },
    #[error("empty template bank: {0}")]
    EmptyTemplates(String),
    #[error("image size {got:?} does not match templates {expected:?}")]
    ImageSize { expected: (usize, usize), got: (usize, usize) },
    #[error("handshake failed: {0}")]
    Handshake(String),
    #[error("batch {batch}: transport error: {message}")]
    Transport { batch: usize, message: String },
    #[error("batch {batch}: malformed response: {message}")]
    Malformed { batch: usize, message: String },
    #[error("batch {batch}: timed out after {millis} ms")]
    Timeout { batch: usize, millis: u64 },
    #[error("batch {batch}: oracle reported: {message}")]
    Remote { batch: usize, message: String },
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// Pre-softmax logits `z_1..z_K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(logits: Vec<f64>) -> Result<Self, OracleError> {
        if logits.len() < 2 {
            return Err(OracleError::TooFewClasses(logits.len()));
        }
        if let Some(i) = logits.iter().position(|v| !v.is_finite()) {
            return Err(OracleError::NonFinite(i));
        }
        Ok(Self(logits))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn class_count(&self) -> usize {
        self.0.len()
    }

    fn check_class(&self, c: usize) -> Result<(), OracleError> {
        if c >= self.0.len() {
            return Err(OracleError::ClassOutOfRange {
                class: c,
                count: self.0.len(),
            });
        }
        Ok(())
    }

    /// Strict argmax: `Some(c)` only when `c` is the unique largest logit.
    pub fn top1(&self) -> Option<usize> {
        let mut best = 0;
        let mut tie = false;
        for (i, &v) in self.0.iter().enumerate().skip(1) {
            if v > self.0[best] {
                best = i;
                tie = false;
            } else if v == self.0[best] {
                tie = true;
            }
        }
        (!tie).then_some(best)
    }

    pub fn softmax_prob(&self, c: usize) -> Result<f64, OracleError> {
        Ok(log_prob(self, c)?.exp())
    }
}

impl TryFrom<Vec<f64>> for LogitVector {
    type Error = OracleError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<LogitVector> for Vec<f64> {
    fn from(v: LogitVector) -> Self {
        v.0
    }
}

/// Decision margin `z_c - max_{i≠c} z_i`; positive iff `c` is the unique argmax.
pub fn margin(z: &LogitVector, c: usize) -> Result<f64, OracleError> {
    z.check_class(c)?;
    let rival = z
        .0
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != c)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(z.0[c] - rival)
}

/// Target log-softmax `z_c - log Σ_k exp z_k`, max-shifted.
pub fn log_prob(z: &LogitVector, c: usize) -> Result<f64, OracleError> {
    z.check_class(c)?;
    let m = z.0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.0.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    Ok((z.0[c] - lse).min(0.0))
}

/// One scored sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginRecord {
    pub params: SceneParams,
    pub target_class: usize,
    pub margin: f64,
    pub top1_correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<LogitVector>,
}

impl MarginRecord {
    pub fn from_logits(params: SceneParams, z: LogitVector, target_class: usize, keep_logits: bool) -> Result<Self, OracleError> {
        let m = margin(&z, target_class)?;
        Ok(Self {
            params,
            target_class,
            margin: m,
            top1_correct: m > 0.0,
            logits: keep_logits.then_some(z),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    SyntheticLinear,
    SyntheticQuadratic,
    SyntheticRenderClassifier,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleDescriptor {
    pub kind: OracleKind,
    pub id: String,
    pub class_count: usize,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleInput {
    /// Scores scene parameters directly; no rendering needed.
    Params,
    Image,
}

#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub params: &'a SceneParams,
    pub image: Option<&'a Image>,
}

/// Uniform query interface. Responses are in request order.
pub trait Oracle: Send {
    fn descriptor(&self) -> &OracleDescriptor;
    fn input(&self) -> OracleInput;
    fn query(&mut self, batch: &[Query<'_>]) -> Result<Vec<LogitVector>, OracleError>;
}

/// Renders `points` when the oracle needs images and queries the oracle.
pub fn evaluate_scenes(
    oracle: &mut dyn Oracle,
    space: &ParamSpace,
    mesh: &Mesh,
    opts: &RenderOptions,
    points: &[SceneParams],
) -> Result<Vec<LogitVector>, OracleError> {
    match oracle.input() {
        OracleInput::Params => {
            for p in points {
                space.check(p)?;
            }
            let batch: Vec<Query> = points.iter().map(|p| Query { params: p, image: None }).collect();
            oracle.query(&batch)
        }
        OracleInput::Image => {
            let images = render_batch(space, mesh, opts, points)?;
            let batch: Vec<Query> = points
                .iter()
                .zip(&images)
                .map(|(p, img)| Query { params: p, image: Some(img) })
                .collect();
            oracle.query(&batch)
        }
    }
}

/// Renders a batch of configurations, in parallel when enabled.
pub fn render_batch(space: &ParamSpace, mesh: &Mesh, opts: &RenderOptions, points: &[SceneParams]) -> Result<Vec<Image>, SpaceError> {
    #[cfg(feature = "parallel")]
    let it = points.par_iter();
    #[cfg(not(feature = "parallel"))]
    let it = points.iter();
    it.map(|p| render::render(space, p, mesh, opts)).collect()
}
