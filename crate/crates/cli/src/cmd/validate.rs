use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use maps_core::cmaes::{constrained_revalidate, validate_mesh, RangeOverride, ValidationConfig, ValidationOutcome, ValidationStatus};
use maps_core::oracle::ScoreKind;
use maps_core::{seed, RenderOptions};

use crate::config::{load_mesh, Common};
use crate::layered;
use crate::oracles::{describe_all, OracleSpec};
use crate::run::{write_json, Run, RunManifest};

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateOpts {
    /// Restarts per mesh.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Generations per restart.
    #[arg(long)]
    pub generations: Option<usize>,
    /// Range used to re-run failed meshes, as NAME=LOW:HIGH. Repeatable.
    #[arg(long = "override")]
    #[serde(rename = "override")]
    pub overrides: Vec<String>,
}

layered!(ValidateOpts { restarts, generations, overrides });

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationRow {
    pub run: String,
    pub model: String,
    pub mesh: String,
    pub outcome: ValidationOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revalidation: Option<ValidationOutcome>,
}

impl ValidationRow {
    fn recognized(&self) -> bool {
        self.final_outcome().status == ValidationStatus::Recognized
    }

    fn final_outcome(&self) -> &ValidationOutcome {
        self.revalidation.as_ref().unwrap_or(&self.outcome)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryLine {
    pub model: String,
    pub meshes: usize,
    pub recognized: usize,
    /// Recognized only after a range override.
    pub recognized_after_override: usize,
    /// Over recognized meshes, counting every generation across restarts.
    pub median_generations: Option<f64>,
    /// Share of recognized meshes that needed a single restart.
    pub single_restart_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub run: String,
    pub overall: SummaryLine,
    pub by_model: Vec<SummaryLine>,
}

fn parse_override(s: &str) -> Result<RangeOverride> {
    let parse = || -> Option<RangeOverride> {
        let (name, range) = s.split_once('=')?;
        let (lo, hi) = range.split_once(':')?;
        Some(RangeOverride {
            name: name.trim().to_string(),
            low: lo.trim().parse().ok()?,
            high: hi.trim().parse().ok()?,
        })
    };
    parse().with_context(|| format!("override {s:?}: expected NAME=LOW:HIGH"))
}

pub fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len().is_multiple_of(2) { (v[m - 1] + v[m]) / 2.0 } else { v[m] })
}

fn summarize(model: &str, rows: &[&ValidationRow]) -> SummaryLine {
    let hits: Vec<&ValidationOutcome> = rows.iter().filter(|r| r.recognized()).map(|r| r.final_outcome()).collect();
    let single = hits.iter().filter(|o| o.restarts_used == 1).count();
    SummaryLine {
        model: model.to_string(),
        meshes: rows.len(),
        recognized: hits.len(),
        recognized_after_override: rows.iter().filter(|r| r.recognized() && r.revalidation.is_some()).count(),
        median_generations: median(hits.iter().map(|o| o.generations_used as f64).collect()),
        single_restart_fraction: (!hits.is_empty()).then(|| single as f64 / hits.len() as f64),
    }
}

pub fn summary(run: &str, models: &[String], rows: &[ValidationRow]) -> ValidationSummary {
    ValidationSummary {
        run: run.to_string(),
        overall: summarize("all", &rows.iter().collect::<Vec<_>>()),
        by_model: models
            .iter()
            .map(|m| summarize(m, &rows.iter().filter(|r| &r.model == m).collect::<Vec<_>>()))
            .collect(),
    }
}

pub fn run(common: Common, opts: ValidateOpts) -> Result<()> {
    let space = common.space()?;
    let overrides = opts.overrides.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>>>()?;
    for o in &overrides {
        space.with_range(&o.name, o.low, o.high).with_context(|| format!("override {}", o.name))?;
    }
    let models = common.oracles()?.to_vec();
    let specs = models.iter().map(|m| OracleSpec::parse(m)).collect::<Result<Vec<_>>>()?;
    let meshes = common.mesh_names();
    let render = RenderOptions::with_resolution(common.resolution());
    let mut base = ValidationConfig::new(space.dim(), common.target(), 0);
    base.k_restarts = opts.restarts.unwrap_or(base.k_restarts);
    base.t_max = opts.generations.unwrap_or(base.t_max);

    let mut manifest = RunManifest::new("validate", serde_json::json!({ "common": common, "validate": opts }), common.seed());
    manifest.score = Some(ScoreKind::LogSoftmax);
    manifest.space_source = Some(common.space_source().to_string());
    manifest.space = Some(space.clone());
    manifest.meshes = meshes.clone();
    manifest.oracles = describe_all(&models, &specs, &space, &load_mesh(&meshes[0])?, &render)?;
    let run = Run::start(manifest, common.out.as_deref(), common.resume)?;
    let (mut out, mut rows) = run.appender::<ValidationRow>("validations.jsonl")?;

    let restart_seed = seed::split(common.seed(), seed::stream::CMAES_RESTARTS);
    let mut task = 0;
    for (model, spec) in models.iter().zip(&specs) {
        for (j, mesh_name) in meshes.iter().enumerate() {
            if let Some(done) = rows.get(task) {
                if done.model != *model || done.mesh != *mesh_name {
                    bail!("validations.jsonl row {} is {}/{}, expected {model}/{mesh_name}", task + 1, done.model, done.mesh);
                }
                task += 1;
                continue;
            }
            let mesh = load_mesh(mesh_name)?;
            let mut oracle = spec.build(model, &space, &mesh, &render)?;
            let cfg = ValidationConfig {
                seed: seed::split(restart_seed, j as u64),
                ..base.clone()
            };
            let outcome = validate_mesh(&space, &mesh, oracle.as_mut(), &render, &cfg).with_context(|| format!("{model} on {mesh_name}"))?;
            let revalidation = if outcome.status == ValidationStatus::Failure && !overrides.is_empty() {
                Some(constrained_revalidate(&space, &mesh, oracle.as_mut(), &render, &outcome, &overrides)?)
            } else {
                None
            };
            let row = ValidationRow {
                run: run.id().to_string(),
                model: model.clone(),
                mesh: mesh_name.clone(),
                outcome,
                revalidation,
            };
            let fin = row.final_outcome();
            eprintln!(
                "validate {model} {mesh_name}: {:?} after {} restarts, {} generations",
                fin.status, fin.restarts_used, fin.generations_used
            );
            out.push(&row)?;
            out.flush()?;
            rows.push(row);
            task += 1;
        }
    }
    drop(out);

    let s = summary(run.id(), &models, &rows);
    write_json(&run.path("summary.json"), &s)?;
    let mut w = csv::Writer::from_path(run.path("summary.csv"))?;
    for line in std::iter::once(&s.overall).chain(&s.by_model) {
        w.serialize(line)?;
    }
    w.flush()?;
    eprintln!(
        "validate: {}/{} recognized; results in {}",
        s.overall.recognized,
        s.overall.meshes,
        run.dir.display()
    );
    Ok(())
}
