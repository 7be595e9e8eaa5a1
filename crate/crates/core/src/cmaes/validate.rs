use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{clamp_unit, validation_lambda, CmaError, EvolutionState};
use crate::oracle::{evaluate_scenes, log_prob, Oracle, OracleError, ScoreKind};
use crate::render::{Mesh, RenderOptions};
use crate::seed;
use crate::space::{ParamSpace, SceneParams, SpaceError};

/// Boundary rule recorded with every outcome.
pub const BOX_RULE: &str = "clamp-for-evaluation+quadratic-penalty";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub t_max: usize,
    pub sigma0: f64,
    pub lambda: usize,
    pub k_restarts: usize,
    pub target_class: usize,
    pub seed: u64,
}

impl ValidationConfig {
    pub fn new(dim: usize, target_class: usize, seed: u64) -> Self {
        Self {
            t_max: 100,
            sigma0: 0.2,
            lambda: validation_lambda(dim),
            k_restarts: 10,
            target_class,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValidationStatus {
    Recognized,
    Failure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Recognized,
    Budget,
    IllConditioned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartTrace {
    pub restart: usize,
    pub seed: u64,
    pub generations: usize,
    /// Best target log-probability of each generation.
    pub best_log_prob: Vec<f64>,
    pub stop: StopReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeOverride {
    pub name: String,
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationOutcome {
    pub status: ValidationStatus,
    pub target_class: usize,
    /// On success, the recognized candidate; otherwise the best one seen.
    pub best_params: Option<SceneParams>,
    pub best_log_prob: f64,
    pub restarts_used: usize,
    pub generations_used: usize,
    pub evaluations: usize,
    pub config: ValidationConfig,
    pub space: String,
    pub score: ScoreKind,
    pub box_rule: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<RangeOverride>,
    pub traces: Vec<RestartTrace>,
}

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("invalid validation config: {0}")]
    Config(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("oracle failed after {} generations: {error}", partial.generations_used)]
    Oracle {
        error: OracleError,
        partial: Box<ValidationOutcome>,
    },
    #[error("constrained revalidation needs a failed outcome")]
    NotAFailure,
}

/// Sequential CMA-ES restarts in the unit cube until some candidate's strict
/// top-1 equals the target class, or every restart spends `t_max` generations.
///
/// Restart `i` draws its start point and sampling stream from
/// `split(cfg.seed, i)`. Fitness is `-log p(target) + ‖x - clamp(x)‖²`.
pub fn validate_mesh(
    space: &ParamSpace,
    mesh: &Mesh,
    oracle: &mut dyn Oracle,
    opts: &RenderOptions,
    cfg: &ValidationConfig,
) -> Result<ValidationOutcome, ValidationError> {
    let class_count = oracle.descriptor().class_count;
    if cfg.target_class >= class_count {
        return Err(ValidationError::Config(format!(
            "target class {} but oracle has {class_count} classes",
            cfg.target_class
        )));
    }
    if cfg.k_restarts == 0 || cfg.t_max == 0 {
        return Err(ValidationError::Config("k_restarts and t_max must be positive".into()));
    }
    let d = space.dim();
    let mut out = ValidationOutcome {
        status: ValidationStatus::Failure,
        target_class: cfg.target_class,
        best_params: None,
        best_log_prob: f64::NEG_INFINITY,
        restarts_used: 0,
        generations_used: 0,
        evaluations: 0,
        config: cfg.clone(),
        space: space.name.clone(),
        score: ScoreKind::LogSoftmax,
        box_rule: BOX_RULE.to_string(),
        overrides: Vec::new(),
        traces: Vec::new(),
    };

    for restart in 0..cfg.k_restarts {
        let rseed = seed::split(cfg.seed, restart as u64);
        let mut rng = seed::rng(rseed);
        let x0: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        let mut es = EvolutionState::new(x0, cfg.sigma0, Some(cfg.lambda), seed::split(rseed, 1)).map_err(|e| ValidationError::Config(e.to_string()))?;
        out.restarts_used += 1;
        let mut trace = RestartTrace {
            restart,
            seed: rseed,
            generations: 0,
            best_log_prob: Vec::new(),
            stop: StopReason::Budget,
        };

        for _ in 0..cfg.t_max {
            let xs = es.ask();
            let mut params = Vec::with_capacity(xs.len());
            let mut penalties = Vec::with_capacity(xs.len());
            for x in &xs {
                let (u, pen) = clamp_unit(x);
                params.push(space.denormalize(&u)?);
                penalties.push(pen);
            }
            let logits = match evaluate_scenes(oracle, space, mesh, opts, &params) {
                Ok(z) => z,
                Err(error) => {
                    out.traces.push(trace);
                    return Err(ValidationError::Oracle {
                        error,
                        partial: Box::new(out),
                    });
                }
            };
            trace.generations += 1;
            out.generations_used += 1;
            out.evaluations += xs.len();

            let mut fitness = Vec::with_capacity(xs.len());
            let mut gen_best = f64::NEG_INFINITY;
            let mut hit: Option<(usize, f64)> = None;
            for (i, z) in logits.iter().enumerate() {
                let lp = log_prob(z, cfg.target_class).map_err(|error| ValidationError::Oracle {
                    error,
                    partial: Box::new(out.clone()),
                })?;
                fitness.push(-lp + penalties[i]);
                gen_best = gen_best.max(lp);
                if z.top1() == Some(cfg.target_class) && hit.is_none_or(|(_, best)| lp > best) {
                    hit = Some((i, lp));
                }
                if out.status == ValidationStatus::Failure && lp > out.best_log_prob {
                    out.best_log_prob = lp;
                    out.best_params = Some(params[i].clone());
                }
            }
            trace.best_log_prob.push(gen_best);

            if let Some((i, lp)) = hit {
                out.status = ValidationStatus::Recognized;
                out.best_log_prob = lp;
                out.best_params = Some(params[i].clone());
                trace.stop = StopReason::Recognized;
                out.traces.push(trace);
                return Ok(out);
            }
            match es.tell(&xs, &fitness) {
                Ok(()) => {}
                Err(CmaError::IllConditioned(_)) => {
                    trace.stop = StopReason::IllConditioned;
                    break;
                }
                Err(e) => return Err(ValidationError::Config(e.to_string())),
            }
        }
        out.traces.push(trace);
    }
    Ok(out)
}

/// Re-runs a failed validation on `space` with some ranges replaced.
pub fn constrained_revalidate(
    space: &ParamSpace,
    mesh: &Mesh,
    oracle: &mut dyn Oracle,
    opts: &RenderOptions,
    previous: &ValidationOutcome,
    overrides: &[RangeOverride],
) -> Result<ValidationOutcome, ValidationError> {
    if previous.status != ValidationStatus::Failure {
        return Err(ValidationError::NotAFailure);
    }
    let mut constrained = space.clone();
    for o in overrides {
        constrained = constrained.with_range(&o.name, o.low, o.high)?;
    }
    let mut out = validate_mesh(&constrained, mesh, oracle, opts, &previous.config)?;
    out.overrides = overrides.to_vec();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{LinearOracle, LogitVector, OracleDescriptor, OracleInput, OracleKind, Query};
    use crate::render::primitives;

    fn setup() -> (ParamSpace, Mesh) {
        (ParamSpace::maps_v1(), primitives::builtin("cube").unwrap().normalized().unwrap().0)
    }

    #[test]
    fn unsatisfiable_oracle_spends_the_whole_budget() {
        let (space, mesh) = setup();
        let mut o = LinearOracle::new("zero", &space, vec![0.0; 13], 0.0, 0).unwrap();
        let cfg = ValidationConfig::new(9, 0, 5);
        let out = validate_mesh(&space, &mesh, &mut o, &RenderOptions::with_resolution(8), &cfg).unwrap();
        assert_eq!(out.status, ValidationStatus::Failure);
        assert_eq!(out.generations_used, 1000);
        assert_eq!(out.evaluations, 6000);
        assert_eq!(out.restarts_used, 10);
        assert!(out.traces.iter().all(|t| t.generations == 100 && t.stop == StopReason::Budget));
        assert!((out.best_log_prob + std::f64::consts::LN_2).abs() < 1e-12);
    }

    struct Always(OracleDescriptor);

    impl Oracle for Always {
        fn descriptor(&self) -> &OracleDescriptor {
            &self.0
        }
        fn input(&self) -> OracleInput {
            OracleInput::Params
        }
        fn query(&mut self, batch: &[Query<'_>]) -> Result<Vec<LogitVector>, OracleError> {
            batch.iter().map(|_| LogitVector::new(vec![1.0, 0.0])).collect()
        }
    }

    fn always() -> Always {
        Always(OracleDescriptor {
            kind: OracleKind::SyntheticLinear,
            id: "always".into(),
            class_count: 2,
            metadata: serde_json::Value::Null,
        })
    }

    #[test]
    fn easy_target_stops_in_first_generation() {
        let (space, mesh) = setup();
        let cfg = ValidationConfig::new(9, 0, 5);
        let out = validate_mesh(&space, &mesh, &mut always(), &RenderOptions::with_resolution(8), &cfg).unwrap();
        assert_eq!(out.status, ValidationStatus::Recognized);
        assert_eq!((out.restarts_used, out.generations_used, out.evaluations), (1, 1, 6));
    }

    #[test]
    fn target_class_must_exist() {
        let (space, mesh) = setup();
        let mut o = LinearOracle::new("zero", &space, vec![0.0; 13], 0.0, 0).unwrap();
        let cfg = ValidationConfig::new(9, 2, 5);
        assert!(matches!(
            validate_mesh(&space, &mesh, &mut o, &RenderOptions::with_resolution(8), &cfg),
            Err(ValidationError::Config(_))
        ));
    }

    #[test]
    fn revalidation_requires_failure() {
        let (space, mesh) = setup();
        let mut o = always();
        let opts = RenderOptions::with_resolution(8);
        let out = validate_mesh(&space, &mesh, &mut o, &opts, &ValidationConfig::new(9, 0, 1)).unwrap();
        let ov = [RangeOverride { name: "C_Dist".into(), low: 0.2, high: 1.0 }];
        assert!(matches!(
            constrained_revalidate(&space, &mesh, &mut o, &opts, &out, &ov),
            Err(ValidationError::NotAFailure)
        ));
    }
}
