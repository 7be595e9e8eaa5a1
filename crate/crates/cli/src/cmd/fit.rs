use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use maps_core::oracle::ScoreKind;
use maps_core::seed;
use maps_core::sensitivity::{convergence_sweep, profile, ConvergenceSweep, Dataset, FitKind, SensitivityProfile};

use crate::cmd::sample::SampleRow;
use crate::config::Common;
use crate::layered;
use crate::run::{read_jsonl, InputRef, Run, RunManifest};

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOpts {
    /// Sample run directory holding records.jsonl.
    #[arg(long)]
    #[serde(skip_serializing)]
    pub input: Option<PathBuf>,
    /// Sample sizes for a convergence sweep, e.g. 500,1000,2000.
    #[arg(long, value_delimiter = ',')]
    pub sweep: Vec<usize>,
}

layered!(FitOpts { input, sweep });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileLine {
    pub run: String,
    #[serde(flatten)]
    pub profile: SensitivityProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepLine {
    pub run: String,
    pub model: String,
    pub mesh: String,
    pub linear: ConvergenceSweep,
    pub polynomial: ConvergenceSweep,
}

/// (model, mesh) groups in order of first appearance.
fn groups(rows: Vec<SampleRow>) -> Vec<(String, String, Vec<SampleRow>)> {
    let mut out: Vec<(String, String, Vec<SampleRow>)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(m, s, _)| *m == r.model && *s == r.mesh) {
            Some(g) => g.2.push(r),
            None => out.push((r.model.clone(), r.mesh.clone(), vec![r])),
        }
    }
    out
}

pub fn run(common: Common, opts: FitOpts) -> Result<()> {
    let input = opts.input.clone().context("fit needs --input <sample run directory>")?;
    let source = RunManifest::load(&input)?;
    if source.command != "sample" {
        bail!("{} is a {} run, not a sample run", input.display(), source.command);
    }
    let space = source.space.clone().context("sample manifest has no space")?;
    let rows: Vec<SampleRow> = read_jsonl(&input.join("records.jsonl"))?;
    let expected = source.n.unwrap_or(0) * source.oracles.len() * source.meshes.len();
    if rows.len() != expected {
        bail!("{} has {} of {expected} records; finish it with sample --resume", input.display(), rows.len());
    }
    if let Some(r) = rows.iter().find(|r| r.run != source.run_id) {
        bail!("record {} belongs to run {}, not {}", r.seq, r.run, source.run_id);
    }
    let seed = common.seed.unwrap_or(source.seed);

    let mut manifest = RunManifest::new("fit", serde_json::json!({ "common": common, "fit": opts }), seed);
    manifest.score = Some(ScoreKind::Margin);
    manifest.space_source = source.space_source.clone();
    manifest.space = Some(space.clone());
    manifest.oracles = source.oracles.clone();
    manifest.meshes = source.meshes.clone();
    manifest.n = source.n;
    manifest.inputs.push(InputRef {
        path: input.clone(),
        run_id: source.run_id.clone(),
    });
    let run = Run::start(manifest, common.out.as_deref(), common.resume)?;
    let (mut out, mut done) = run.appender::<ProfileLine>("profiles.jsonl")?;
    let (mut sweeps, sweeps_done) = if opts.sweep.is_empty() {
        (None, Vec::new())
    } else {
        let (a, rows) = run.appender::<SweepLine>("convergence.jsonl")?;
        (Some(a), rows)
    };

    let folds_seed = seed::split(seed, seed::stream::CV_FOLDS);
    for (i, (model, mesh, group)) in groups(rows).into_iter().enumerate() {
        let records: Vec<_> = group.into_iter().map(|r| r.record).collect();
        let data = Dataset::from_records(&space, &records)?;
        if i >= done.len() {
            let p = profile(&model, &mesh, &data, folds_seed).with_context(|| format!("fitting {model} on {mesh}"))?;
            eprintln!(
                "fit {model} {mesh}: cv_r2 linear {} polynomial {}",
                fmt_r2(p.linear.cv_r2),
                fmt_r2(p.polynomial.cv_r2)
            );
            let line = ProfileLine {
                run: run.id().to_string(),
                profile: p,
            };
            out.push(&line)?;
            out.flush()?;
            done.push(line);
        }
        if let Some(w) = sweeps.as_mut().filter(|_| i >= sweeps_done.len()) {
            w.push(&SweepLine {
                run: run.id().to_string(),
                model: model.clone(),
                mesh: mesh.clone(),
                linear: convergence_sweep(&data, FitKind::Linear, &opts.sweep, folds_seed)?,
                polynomial: convergence_sweep(&data, FitKind::Polynomial, &opts.sweep, folds_seed)?,
            })?;
            w.flush()?;
        }
    }

    let mut w = csv::Writer::from_path(run.path("profiles.csv"))?;
    w.write_record(["run", "model_id", "mesh_id", "parameter", "linear_weight", "poly_weight", "main", "interaction", "cv_r2_linear", "cv_r2_poly"])?;
    for line in &done {
        for r in line.profile.rows() {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([
                line.run.clone(),
                r.model_id,
                r.mesh_id,
                r.parameter,
                r.linear_weight.to_string(),
                r.poly_weight.to_string(),
                r.main.to_string(),
                r.interaction.to_string(),
                opt(r.cv_r2_linear),
                opt(r.cv_r2_poly),
            ])?;
        }
    }
    w.flush()?;
    eprintln!("fit: {} profiles in {}", done.len(), run.dir.display());
    Ok(())
}

fn fmt_r2(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |x| format!("{x:.3}"))
}
