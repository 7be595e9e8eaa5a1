use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use maps_core::oracle::{evaluate_scenes, ScoreKind};
use maps_core::RenderOptions;

use crate::config::{load_mesh, Common};
use crate::layered;
use crate::oracles::{descriptor, OracleSpec};
use crate::run::{write_json, Run, RunManifest};

const DEFAULT_STEPS: usize = 24;

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepOpts {
    /// Two parameter names, slowest first, e.g. B_Hue,C_Azm.
    #[arg(long, value_delimiter = ',')]
    pub axes: Vec<String>,
    /// Grid points per axis.
    #[arg(long)]
    pub steps: Option<usize>,
}

layered!(SweepOpts { axes, steps });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub run: String,
    pub model: String,
    pub mesh: String,
    pub target_class: usize,
    pub axes: [String; 2],
    pub rows: Vec<f64>,
    pub cols: Vec<f64>,
    /// Softmax probability of the target class, `prob[row][col]`.
    pub prob: Vec<Vec<f64>>,
}

pub fn run(common: Common, opts: SweepOpts) -> Result<()> {
    let space = common.space()?;
    let [a0, a1] = <[String; 2]>::try_from(opts.axes.clone()).map_err(|_| anyhow::anyhow!("--axes takes exactly two names"))?;
    let steps = opts.steps.unwrap_or(DEFAULT_STEPS);
    let (model, mesh_name) = match (common.oracles()?, common.mesh.as_slice()) {
        ([o], [m]) => (o.clone(), m.clone()),
        ([_], []) => bail!("sweep2d needs one --mesh"),
        _ => bail!("sweep2d takes exactly one --oracle and one --mesh"),
    };
    let target = common.target();
    let render = RenderOptions::with_resolution(common.resolution());
    let mesh = load_mesh(&mesh_name)?;
    let spec = OracleSpec::parse(&model)?;
    let mut oracle = spec.build(&model, &space, &mesh, &render)?;
    let points = space.grid_sweep(&[&a0, &a1], steps, &space.default_params())?;

    let mut manifest = RunManifest::new("sweep2d", serde_json::json!({ "common": common, "sweep2d": opts }), common.seed());
    manifest.score = Some(ScoreKind::LogSoftmax);
    manifest.space_source = Some(common.space_source().to_string());
    manifest.space = Some(space.clone());
    manifest.meshes = vec![mesh_name.clone()];
    manifest.oracles = vec![descriptor(oracle.as_ref(), &model)];
    manifest.n = Some(points.len());
    let run = Run::start(manifest, common.out.as_deref(), common.resume)?;

    let logits = evaluate_scenes(oracle.as_mut(), &space, &mesh, &render, &points).with_context(|| format!("{model} on {mesh_name}"))?;
    let probs = logits.iter().map(|z| z.softmax_prob(target)).collect::<Result<Vec<_>, _>>()?;
    let rows = space.axis_values(space.index_of(&a0)?, steps);
    let cols = space.axis_values(space.index_of(&a1)?, steps);
    let prob: Vec<Vec<f64>> = probs.chunks(cols.len()).map(<[f64]>::to_vec).collect();

    let mut w = csv::Writer::from_path(run.path("grid.csv"))?;
    w.write_record(std::iter::once(format!("{a0}\\{a1}")).chain(cols.iter().map(f64::to_string)))?;
    for (r, line) in rows.iter().zip(&prob) {
        w.write_record(std::iter::once(r.to_string()).chain(line.iter().map(f64::to_string)))?;
    }
    w.flush()?;
    write_json(
        &run.path("grid.json"),
        &SweepGrid {
            run: run.id().to_string(),
            model,
            mesh: mesh_name,
            target_class: target,
            axes: [a0, a1],
            rows,
            cols,
            prob,
        },
    )?;
    eprintln!("sweep2d: {steps}x{steps} grid in {}", run.dir.display());
    Ok(())
}
