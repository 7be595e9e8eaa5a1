//! Oracle specifications given on the command line.

use anyhow::{bail, Context, Result};

use maps_core::oracle::{Endpoint, ExternalOracle, LinearOracle, QuadraticOracle, TemplateClassifier};
use maps_core::render::{self, Mesh};
use maps_core::{seed, Oracle, OracleDescriptor, ParamSpace, RenderOptions};

/// Noise added by the parameter-driven builtins.
pub const BUILTIN_NOISE_SD: f64 = 0.1;
const DISTRACTORS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleSpec {
    Linear(u64),
    Quadratic(u64),
    /// Class 0 is the mesh at a seeded configuration, class 1 the mesh at
    /// other seeded configurations.
    Templates(u64),
    External(Endpoint),
}

impl OracleSpec {
    pub fn parse(s: &str) -> Result<Self> {
        if let Some(ep) = Endpoint::parse(s) {
            return Ok(Self::External(ep));
        }
        let Some(rest) = s.strip_prefix("builtin:") else {
            bail!("oracle {s:?}: expected builtin:<name>[:seed], exec:<command> or tcp:<addr>");
        };
        let (name, seed) = match rest.split_once(':') {
            Some((n, v)) => (n, v.parse::<u64>().with_context(|| format!("oracle {s:?}: bad seed"))?),
            None => (rest, 1),
        };
        Ok(match name {
            "linear" => Self::Linear(seed),
            "quadratic" => Self::Quadratic(seed),
            "templates" => Self::Templates(seed),
            other => bail!("unknown builtin oracle {other:?} (linear, quadratic, templates)"),
        })
    }

    /// Builds the oracle for one mesh. `id` becomes the descriptor id so
    /// records are keyed by what the user typed.
    pub fn build(&self, id: &str, space: &ParamSpace, mesh: &Mesh, opts: &RenderOptions) -> Result<Box<dyn Oracle>> {
        Ok(match self {
            Self::Linear(s) => Box::new(LinearOracle::random(id, space, BUILTIN_NOISE_SD, *s)),
            Self::Quadratic(s) => Box::new(QuadraticOracle::random(id, space, BUILTIN_NOISE_SD, *s)),
            Self::Templates(s) => {
                let star = space.lhs_sample(1, seed::split(*s, 1))?.remove(0);
                let target = render::render(space, &star, mesh, opts)?;
                let others = space
                    .lhs_sample(DISTRACTORS, seed::split(*s, 2))?
                    .iter()
                    .map(|p| render::render(space, p, mesh, opts))
                    .collect::<Result<Vec<_>, _>>()?;
                Box::new(TemplateClassifier::new(id, vec![vec![target], others])?)
            }
            Self::External(ep) => Box::new(ExternalOracle::connect(ep).with_context(|| format!("connecting to {id}"))?),
        })
    }
}

/// Descriptor with the command-line id recorded in place of the oracle's own.
pub fn descriptor(oracle: &dyn Oracle, id: &str) -> OracleDescriptor {
    let mut d = oracle.descriptor().clone();
    if d.id != id {
        let own = std::mem::replace(&mut d.id, id.to_string());
        if let serde_json::Value::Object(m) = &mut d.metadata {
            m.insert("reported_id".into(), own.into());
        } else {
            d.metadata = serde_json::json!({ "reported_id": own });
        }
    }
    d
}

/// Descriptors for the manifest, built against one mesh.
pub fn describe_all(models: &[String], specs: &[OracleSpec], space: &ParamSpace, mesh: &Mesh, opts: &RenderOptions) -> Result<Vec<OracleDescriptor>> {
    models
        .iter()
        .zip(specs)
        .map(|(m, s)| Ok(descriptor(s.build(m, space, mesh, opts)?.as_ref(), m)))
        .collect()
}
