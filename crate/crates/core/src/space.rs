//! The bounded parametric scene space.
//!
//! A [`ParamSpace`] is an ordered list of [`ParamSpec`]s. Points in the space
//! ([`SceneParams`]) are stored in native units (radians, scene units or
//! unitless) and can be normalized to the unit hypercube, encoded for
//! regression (circular parameters become a `(cos, sin)` pair) or produced by
//! the samplers in this module.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

/// Name of the built-in nine-parameter space.
pub const CANONICAL_PRESET: &str = "maps-v1";

/// Placement of LHS samples inside their stratum, recorded in run metadata.
pub const LHS_JITTER: &str = "uniform";

/// Tolerance on the `2π` span of circular parameters.
const CIRCULAR_SPAN_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("value {value} of parameter {name} (index {index}) is outside [{low}, {high}]")]
    OutOfRange {
        index: usize,
        name: String,
        value: f64,
        low: f64,
        high: f64,
    },
    #[error("invalid parameter spec {name}: {reason}")]
    InvalidSpec { name: String, reason: String },
    #[error("unknown parameter {0}")]
    UnknownParameter(String),
    #[error("unknown space preset {0}")]
    UnknownPreset(String),
    #[error("invalid sampler arguments: {0}")]
    InvalidArgument(String),
    #[error("config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    /// Angular parameter, interpreted modulo `2π`.
    Circular,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub low: f64,
    pub high: f64,
    pub default: f64,
}

#[derive(Deserialize)]
struct RawSpec {
    name: String,
    kind: ParamKind,
    low: f64,
    high: f64,
    default: f64,
}

impl TryFrom<RawSpec> for ParamSpec {
    type Error = SpaceError;
    fn try_from(r: RawSpec) -> Result<Self, SpaceError> {
        ParamSpec::new(r.name, r.kind, r.low, r.high, r.default)
    }
}

impl ParamSpec {
    pub fn new(
        name: impl Into<String>,
        kind: ParamKind,
        low: f64,
        high: f64,
        default: f64,
    ) -> Result<Self, SpaceError> {
        let spec = Self {
            name: name.into(),
            kind,
            low,
            high,
            default,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), SpaceError> {
        let fail = |reason: &str| {
            Err(SpaceError::InvalidSpec {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        if self.name.is_empty() {
            return fail("empty name");
        }
        if !(self.low.is_finite() && self.high.is_finite() && self.default.is_finite()) {
            return fail("bounds must be finite");
        }
        if self.low >= self.high {
            return fail("low must be below high");
        }
        if self.kind == ParamKind::Circular && ((self.high - self.low) - TAU).abs() > CIRCULAR_SPAN_TOL {
            return fail("circular parameters must span exactly 2π");
        }
        if !(self.low..=self.high).contains(&self.default) {
            return fail("default outside range");
        }
        Ok(())
    }

    pub fn span(&self) -> f64 {
        self.high - self.low
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.low && value <= self.high
    }
}

/// A point in a [`ParamSpace`], in native units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SceneParams {
    pub values: Vec<f64>,
}

impl SceneParams {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureRole {
    Raw,
    Cos,
    Sin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub param: usize,
    pub role: FeatureRole,
}

/// Column layout of the regression encoding of a space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub param_names: Vec<String>,
    pub columns: Vec<FeatureColumn>,
}

impl FeatureLayout {
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn column_name(&self, j: usize) -> String {
        let c = self.columns[j];
        let name = &self.param_names[c.param];
        match c.role {
            FeatureRole::Raw => name.clone(),
            FeatureRole::Cos => format!("cos({name})"),
            FeatureRole::Sin => format!("sin({name})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedFeatures {
    pub columns: Vec<f64>,
    pub layout: FeatureLayout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace")]
pub struct ParamSpace {
    pub name: String,
    pub specs: Vec<ParamSpec>,
}

#[derive(Deserialize)]
struct RawSpace {
    name: String,
    specs: Vec<ParamSpec>,
}

impl TryFrom<RawSpace> for ParamSpace {
    type Error = SpaceError;
    fn try_from(r: RawSpace) -> Result<Self, SpaceError> {
        ParamSpace::new(r.name, r.specs)
    }
}

impl ParamSpace {
    pub fn new(name: impl Into<String>, specs: Vec<ParamSpec>) -> Result<Self, SpaceError> {
        if specs.is_empty() {
            return Err(SpaceError::Config("space has no parameters".into()));
        }
        for (i, s) in specs.iter().enumerate() {
            s.validate()?;
            if specs[..i].iter().any(|o| o.name == s.name) {
                return Err(SpaceError::InvalidSpec {
                    name: s.name.clone(),
                    reason: "duplicate name".into(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            specs,
        })
    }

    /// The canonical nine-dimensional scene space.
    ///
    /// Elevations use the polar convention: `0` is the `+z` pole and `π/2`
    /// the horizontal plane.
    pub fn maps_v1() -> Self {
        use ParamKind::{Circular, Linear};
        let s = |n: &str, k, lo, hi, d| ParamSpec {
            name: n.to_string(),
            kind: k,
            low: lo,
            high: hi,
            default: d,
        };
        Self {
            name: CANONICAL_PRESET.to_string(),
            specs: vec![
                s("B_Hue", Circular, 0.0, TAU, 0.0),
                s("B_Sat", Linear, 0.0, 1.0, 0.5),
                s("C_Azm", Circular, 0.0, TAU, 0.0),
                s("C_Dist", Linear, 1.0, 8.0, 2.0),
                s("C_Elv", Linear, 0.0, PI, PI / 2.0),
                s("C_Roll", Circular, 0.0, TAU, 0.0),
                s("L_Azm", Circular, 0.0, TAU, PI / 4.0),
                s("L_Elv", Linear, 0.0, PI, PI / 4.0),
                s("L_Pow", Linear, 0.1, 1.0, 1.0),
            ],
        }
    }

    pub fn preset(name: &str) -> Result<Self, SpaceError> {
        match name {
            CANONICAL_PRESET => Ok(Self::maps_v1()),
            other => Err(SpaceError::UnknownPreset(other.to_string())),
        }
    }

    /// Parses a TOML document with one `[[params]]` table per dimension.
    ///
    /// Bounds may be numbers or the strings `"pi"`, `"2pi"`, `"pi/2"` (an
    /// optional leading `-` is accepted).
    pub fn from_toml_str(text: &str) -> Result<Self, SpaceError> {
        let doc: SpaceDoc = toml::from_str(text).map_err(|e| SpaceError::Config(e.to_string()))?;
        let specs = doc
            .params
            .into_iter()
            .map(|p| {
                let low = p.low.value()?;
                let high = p.high.value()?;
                let default = match p.default {
                    Some(d) => d.value()?,
                    None => low,
                };
                ParamSpec::new(p.name, p.kind, low, high, default)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(doc.name.unwrap_or_else(|| "custom".to_string()), specs)
    }

    pub fn from_file(path: &Path) -> Result<Self, SpaceError> {
        let text = std::fs::read_to_string(path).map_err(|e| SpaceError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Resolves a preset name, falling back to reading a config file.
    pub fn resolve(preset_or_path: &str) -> Result<Self, SpaceError> {
        match Self::preset(preset_or_path) {
            Ok(s) => Ok(s),
            Err(_) if Path::new(preset_or_path).exists() => Self::from_file(Path::new(preset_or_path)),
            Err(e) => Err(e),
        }
    }

    pub fn dim(&self) -> usize {
        self.specs.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.specs.iter().map(|s| s.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Result<usize, SpaceError> {
        self.specs
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| SpaceError::UnknownParameter(name.to_string()))
    }

    /// Returns a copy with the range of `name` replaced; the default is
    /// clamped into the new range.
    pub fn with_range(&self, name: &str, low: f64, high: f64) -> Result<Self, SpaceError> {
        let i = self.index_of(name)?;
        let mut specs = self.specs.clone();
        let s = &mut specs[i];
        s.low = low;
        s.high = high;
        s.default = s.default.clamp(low.min(high), high.max(low));
        s.validate()?;
        Ok(Self {
            name: format!("{}[{}=[{},{}]]", self.name, name, low, high),
            specs,
        })
    }

    pub fn default_params(&self) -> SceneParams {
        SceneParams::new(self.specs.iter().map(|s| s.default).collect())
    }

    pub fn check(&self, p: &SceneParams) -> Result<(), SpaceError> {
        self.check_dim(p.len())?;
        for (i, (s, &v)) in self.specs.iter().zip(&p.values).enumerate() {
            if !s.contains(v) {
                return Err(SpaceError::OutOfRange {
                    index: i,
                    name: s.name.clone(),
                    value: v,
                    low: s.low,
                    high: s.high,
                });
            }
        }
        Ok(())
    }

    fn check_dim(&self, got: usize) -> Result<(), SpaceError> {
        if got != self.dim() {
            return Err(SpaceError::DimensionMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }

    /// Maps native values to `[0, 1]^d`.
    pub fn normalize(&self, p: &SceneParams) -> Result<Vec<f64>, SpaceError> {
        self.check(p)?;
        Ok(self
            .specs
            .iter()
            .zip(&p.values)
            .map(|(s, v)| (v - s.low) / s.span())
            .collect())
    }

    /// Inverse of [`normalize`](Self::normalize); unit coordinates must lie in `[0, 1]`.
    pub fn denormalize(&self, unit: &[f64]) -> Result<SceneParams, SpaceError> {
        self.check_dim(unit.len())?;
        let mut values = Vec::with_capacity(unit.len());
        for (i, (s, &u)) in self.specs.iter().zip(unit).enumerate() {
            if !(0.0..=1.0).contains(&u) {
                return Err(SpaceError::OutOfRange {
                    index: i,
                    name: s.name.clone(),
                    value: u,
                    low: 0.0,
                    high: 1.0,
                });
            }
            values.push((s.low + u * s.span()).min(s.high));
        }
        Ok(SceneParams::new(values))
    }

    pub fn feature_layout(&self) -> FeatureLayout {
        let mut columns = Vec::new();
        for (i, s) in self.specs.iter().enumerate() {
            match s.kind {
                ParamKind::Circular => {
                    columns.push(FeatureColumn { param: i, role: FeatureRole::Cos });
                    columns.push(FeatureColumn { param: i, role: FeatureRole::Sin });
                }
                ParamKind::Linear => columns.push(FeatureColumn { param: i, role: FeatureRole::Raw }),
            }
        }
        FeatureLayout {
            param_names: self.names(),
            columns,
        }
    }

    /// Appends the regression encoding of `p` to `row` without range checks.
    pub(crate) fn encode_into(&self, p: &SceneParams, row: &mut Vec<f64>) {
        for (s, &v) in self.specs.iter().zip(&p.values) {
            match s.kind {
                ParamKind::Circular => {
                    let (sin, cos) = v.sin_cos();
                    row.push(cos);
                    row.push(sin);
                }
                ParamKind::Linear => row.push(v),
            }
        }
    }

    pub fn encode(&self, p: &SceneParams) -> Result<EncodedFeatures, SpaceError> {
        self.check(p)?;
        let mut columns = Vec::with_capacity(self.dim() * 2);
        self.encode_into(p, &mut columns);
        Ok(EncodedFeatures {
            columns,
            layout: self.feature_layout(),
        })
    }

    /// Latin hypercube sample of `n` points.
    ///
    /// Each dimension draws an independent permutation of the `n` strata from
    /// its own stream `split(seed, dim)`, then places the point uniformly
    /// inside its stratum.
    pub fn lhs_sample(&self, n: usize, seed: u64) -> Result<Vec<SceneParams>, SpaceError> {
        if n == 0 {
            return Err(SpaceError::InvalidArgument("LHS needs n >= 1".into()));
        }
        let mut unit = vec![vec![0.0; self.dim()]; n];
        let nf = n as f64;
        for d in 0..self.dim() {
            let mut rng = seed::rng(seed::split(seed, d as u64));
            let mut strata: Vec<usize> = (0..n).collect();
            strata.shuffle(&mut rng);
            for (row, &k) in unit.iter_mut().zip(&strata) {
                let jitter: f64 = rng.random::<f64>();
                let mut u = (k as f64 + jitter) / nf;
                while (u * nf).floor() as usize > k {
                    u = u.next_down();
                }
                row[d] = u;
            }
        }
        unit.iter().map(|u| self.denormalize(u)).collect()
    }

    /// Evenly spaced values of one axis for a sweep. Circular axes omit the
    /// duplicated endpoint, linear axes include both bounds.
    pub fn axis_values(&self, index: usize, steps: usize) -> Vec<f64> {
        let s = &self.specs[index];
        match (s.kind, steps) {
            (_, 0) => Vec::new(),
            (ParamKind::Linear, 1) => vec![s.low],
            (ParamKind::Linear, _) => (0..steps)
                .map(|i| s.low + s.span() * i as f64 / (steps - 1) as f64)
                .collect(),
            (ParamKind::Circular, _) => (0..steps).map(|i| s.low + TAU * i as f64 / steps as f64).collect(),
        }
    }

    /// Cartesian sweep over one or two named axes with all other parameters
    /// held at `base`. The first axis varies slowest.
    pub fn grid_sweep(&self, axes: &[&str], steps: usize, base: &SceneParams) -> Result<Vec<SceneParams>, SpaceError> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(SpaceError::InvalidArgument("sweeps take one or two axes".into()));
        }
        if steps == 0 {
            return Err(SpaceError::InvalidArgument("steps must be positive".into()));
        }
        if axes.len() == 2 && axes[0] == axes[1] {
            return Err(SpaceError::InvalidArgument(format!("axis {} given twice", axes[0])));
        }
        self.check(base)?;
        let idx = axes.iter().map(|a| self.index_of(a)).collect::<Result<Vec<_>, _>>()?;
        let mut out = Vec::new();
        let first = self.axis_values(idx[0], steps);
        match idx.get(1) {
            None => {
                for &a in &first {
                    let mut p = base.clone();
                    p.values[idx[0]] = a;
                    out.push(p);
                }
            }
            Some(&j) => {
                let second = self.axis_values(j, steps);
                for &a in &first {
                    for &b in &second {
                        let mut p = base.clone();
                        p.values[idx[0]] = a;
                        p.values[j] = b;
                        out.push(p);
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Deserialize)]
struct SpaceDoc {
    name: Option<String>,
    params: Vec<ParamDoc>,
}

#[derive(Deserialize)]
struct ParamDoc {
    name: String,
    kind: ParamKind,
    low: Bound,
    high: Bound,
    default: Option<Bound>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Bound {
    Number(f64),
    Expr(String),
}

impl Bound {
    fn value(&self) -> Result<f64, SpaceError> {
        match self {
            Bound::Number(v) => Ok(*v),
            Bound::Expr(e) => {
                let t = e.trim().replace(' ', "").to_ascii_lowercase();
                let (sign, body) = match t.strip_prefix('-') {
                    Some(rest) => (-1.0, rest.to_string()),
                    None => (1.0, t.clone()),
                };
                let v = match body.as_str() {
                    "pi" => PI,
                    "2pi" | "tau" => TAU,
                    "pi/2" => PI / 2.0,
                    "pi/4" => PI / 4.0,
                    "0" => 0.0,
                    _ => return Err(SpaceError::Config(format!("cannot parse bound {e:?}"))),
                };
                Ok(sign * v)
            }
        }
    }
}
