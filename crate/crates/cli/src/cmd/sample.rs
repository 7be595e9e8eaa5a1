use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use maps_core::oracle::{evaluate_scenes, ScoreKind};
use maps_core::{seed, MarginRecord, RenderOptions};

use crate::config::{load_mesh, Common};
use crate::layered;
use crate::oracles::{describe_all, OracleSpec};
use crate::run::{Run, RunManifest};

pub const DEFAULT_N: usize = 5000;
const DEFAULT_BATCH: usize = 256;

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleOpts {
    /// Scenes per oracle call.
    #[arg(long)]
    #[serde(skip_serializing)]
    pub batch: Option<usize>,
    /// Keep the full logit vector in every record.
    #[arg(long)]
    pub logits: bool,
}

layered!(SampleOpts { batch, logits });

/// One line of records.jsonl.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub seq: u64,
    pub run: String,
    pub model: String,
    pub mesh: String,
    #[serde(flatten)]
    pub record: MarginRecord,
}

pub fn run(common: Common, opts: SampleOpts) -> Result<()> {
    let space = common.space()?;
    let models = common.oracles()?.to_vec();
    let specs = models.iter().map(|m| OracleSpec::parse(m)).collect::<Result<Vec<_>>>()?;
    let meshes = common.mesh_names();
    let n = common.n.unwrap_or(DEFAULT_N);
    let target = common.target();
    let batch = opts.batch.unwrap_or(DEFAULT_BATCH).max(1);
    let render = RenderOptions::with_resolution(common.resolution());

    let mut manifest = RunManifest::new("sample", serde_json::json!({ "common": common, "sample": opts }), common.seed());
    manifest.score = Some(ScoreKind::Margin);
    manifest.space_source = Some(common.space_source().to_string());
    manifest.space = Some(space.clone());
    manifest.meshes = meshes.clone();
    manifest.n = Some(n);
    manifest.oracles = describe_all(&models, &specs, &space, &load_mesh(&meshes[0])?, &render)?;
    let run = Run::start(manifest, common.out.as_deref(), common.resume)?;
    let (mut out, done) = run.appender::<SampleRow>("records.jsonl")?;
    if let Some((i, r)) = done.iter().enumerate().find(|(i, r)| r.seq != *i as u64) {
        bail!("records.jsonl row {} has seq {}; the file was edited", i + 1, r.seq);
    }
    let mut next = done.len() as u64;
    if run.resumed {
        eprintln!("sample: resuming at seq {next}");
    }

    // Designs depend on the mesh index only, so every oracle sees the same scenes.
    let design_seed = seed::split(common.seed(), seed::stream::SAMPLING);
    for (mi, (model, spec)) in models.iter().zip(&specs).enumerate() {
        for (j, mesh_name) in meshes.iter().enumerate() {
            let start = ((mi * meshes.len() + j) * n) as u64;
            let end = start + n as u64;
            if next >= end {
                continue;
            }
            let mesh = load_mesh(mesh_name)?;
            let mut oracle = spec.build(model, &space, &mesh, &render)?;
            let design = space.lhs_sample(n, seed::split(design_seed, j as u64))?;
            let skip = (next - start) as usize;
            for chunk in design[skip..].chunks(batch) {
                let logits = evaluate_scenes(oracle.as_mut(), &space, &mesh, &render, chunk).with_context(|| format!("{model} on {mesh_name}"))?;
                for (p, z) in chunk.iter().zip(logits) {
                    let row = SampleRow {
                        seq: next,
                        run: run.id().to_string(),
                        model: model.clone(),
                        mesh: mesh_name.clone(),
                        record: MarginRecord::from_logits(p.clone(), z, target, opts.logits)?,
                    };
                    out.push(&row)?;
                    next += 1;
                }
                out.flush()?;
            }
            eprintln!("sample {model} {mesh_name}: {n} records");
        }
    }
    eprintln!("sample: {next} records in {}", run.dir.display());
    Ok(())
}
