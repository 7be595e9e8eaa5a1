use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use maps_core::analysis::{
    cut_tree, model_dissimilarity, ward_cluster, ward_rows, AccuracyMatrix, CellReduce, ClusterTree, CoefficientMatrix, DistanceMatrix, Heatmap,
    Weighting,
};
use maps_core::analysis::cluster::Dendrogram;

use crate::cmd::fit::ProfileLine;
use crate::cmd::sample::SampleRow;
use crate::config::Common;
use crate::layered;
use crate::run::{read_jsonl, write_json, InputRef, Run, RunManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum WeightingArg {
    Linear,
    Polynomial,
}

impl From<WeightingArg> for Weighting {
    fn from(w: WeightingArg) -> Self {
        match w {
            WeightingArg::Linear => Weighting::Linear,
            WeightingArg::Polynomial => Weighting::Polynomial,
        }
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareOpts {
    /// Fit run directories. Repeatable.
    #[arg(long)]
    #[serde(skip_serializing)]
    pub input: Vec<PathBuf>,
    /// Sample run directory; adds the accuracy matrix.
    #[arg(long)]
    #[serde(skip_serializing)]
    pub records: Option<PathBuf>,
    /// Which per-parameter weights feed the distances.
    #[arg(long, value_enum)]
    pub weighting: Option<WeightingArg>,
    /// Number of model clusters to cut.
    #[arg(long)]
    pub k: Option<usize>,
}

layered!(CompareOpts { input, records, weighting, k });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeatmap {
    pub model: String,
    /// Meshes ordered by Ward clustering of this model's rows.
    pub heatmap: Heatmap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub run: String,
    pub weighting: WeightingArg,
    pub models: Vec<String>,
    pub meshes: Vec<String>,
    pub params: Vec<String>,
    pub distances: DistanceMatrix,
    pub tree: ClusterTree,
    pub dendrogram: Dendrogram,
    pub k: usize,
    pub clusters: Vec<usize>,
    /// Distance matrix in dendrogram order.
    pub heatmap: Heatmap,
    pub coefficients: Vec<ModelHeatmap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub run: String,
    pub matrix: AccuracyMatrix,
    pub heatmap: Heatmap,
}

pub fn run(common: Common, opts: CompareOpts) -> Result<()> {
    if opts.input.is_empty() {
        bail!("compare needs at least one --input <fit run directory>");
    }
    let weighting = opts.weighting.unwrap_or(WeightingArg::Linear);
    let mut inputs = Vec::new();
    let mut lines: Vec<ProfileLine> = Vec::new();
    for dir in &opts.input {
        let m = RunManifest::load(dir)?;
        if m.command != "fit" {
            bail!("{} is a {} run, not a fit run", dir.display(), m.command);
        }
        lines.extend(read_jsonl::<ProfileLine>(&dir.join("profiles.jsonl"))?);
        inputs.push(InputRef {
            path: dir.clone(),
            run_id: m.run_id,
        });
    }
    let records = match &opts.records {
        Some(dir) => {
            let m = RunManifest::load(dir)?;
            if m.command != "sample" {
                bail!("{} is a {} run, not a sample run", dir.display(), m.command);
            }
            inputs.push(InputRef {
                path: dir.clone(),
                run_id: m.run_id,
            });
            Some(read_jsonl::<SampleRow>(&dir.join("records.jsonl"))?)
        }
        None => None,
    };

    let mut models: Vec<String> = Vec::new();
    let mut meshes: Vec<String> = Vec::new();
    for l in &lines {
        if !models.contains(&l.profile.model_id) {
            models.push(l.profile.model_id.clone());
        }
        if !meshes.contains(&l.profile.mesh_id) {
            meshes.push(l.profile.mesh_id.clone());
        }
    }
    if models.len() < 2 {
        bail!("compare needs profiles from at least two models, found {}", models.len());
    }
    let k = opts.k.unwrap_or(2).clamp(1, models.len());

    let mut manifest = RunManifest::new("compare", serde_json::json!({ "common": common, "compare": opts }), common.seed());
    manifest.meshes = meshes.clone();
    manifest.inputs = inputs;
    let run = Run::start(manifest, common.out.as_deref(), common.resume)?;

    let matrices = models
        .iter()
        .map(|model| {
            let profiles = meshes
                .iter()
                .map(|mesh| {
                    let mut hits = lines.iter().filter(|l| l.profile.model_id == *model && l.profile.mesh_id == *mesh);
                    let p = hits.next().with_context(|| format!("no profile for {model} on {mesh}"))?;
                    if hits.next().is_some() {
                        bail!("two profiles for {model} on {mesh}");
                    }
                    Ok(&p.profile)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(CoefficientMatrix::from_profiles(&profiles, weighting.into())?)
        })
        .collect::<Result<Vec<_>>>()?;
    let distances = model_dissimilarity(&matrices)?;
    let tree = ward_cluster(&distances)?;
    let clusters = cut_tree(&tree, k)?;
    let dendrogram = tree.dendrogram();
    let heatmap = Heatmap::from_distances(&distances, &dendrogram.leaf_order);
    let coefficients = matrices
        .iter()
        .map(|c| {
            let order = if c.meshes.len() >= 2 { ward_rows(&c.values).leaf_order() } else { vec![0] };
            ModelHeatmap {
                model: c.model_id.clone(),
                heatmap: Heatmap {
                    row_labels: order.iter().map(|&i| c.meshes[i].clone()).collect(),
                    col_labels: c.params.clone(),
                    values: order.iter().map(|&i| c.values.row(i).iter().copied().collect()).collect(),
                    strip: None,
                },
            }
        })
        .collect();

    std::fs::write(run.path("distances.csv"), distances.to_csv())?;
    let report = CompareReport {
        run: run.id().to_string(),
        weighting,
        models: models.clone(),
        meshes: meshes.clone(),
        params: matrices[0].params.clone(),
        distances,
        tree,
        dendrogram,
        k,
        clusters,
        heatmap,
        coefficients,
    };
    write_json(&run.path("compare.json"), &report)?;

    if let Some(rows) = records {
        let acc = accuracy(&models, &meshes, &rows)?;
        let heatmap = acc.heatmap(&acc.row_order(), &acc.column_order());
        write_json(
            &run.path("accuracy.json"),
            &AccuracyReport {
                run: run.id().to_string(),
                matrix: acc,
                heatmap,
            },
        )?;
    }
    eprintln!("compare: {} models, {} meshes; results in {}", models.len(), meshes.len(), run.dir.display());
    Ok(())
}

/// Top-1 correctness per (model, mesh) cell.
fn accuracy(models: &[String], meshes: &[String], rows: &[SampleRow]) -> Result<AccuracyMatrix> {
    let mut cells = vec![vec![Vec::new(); meshes.len()]; models.len()];
    for r in rows {
        let (Some(i), Some(j)) = (models.iter().position(|m| *m == r.model), meshes.iter().position(|m| *m == r.mesh)) else {
            continue;
        };
        cells[i][j].push(r.record.top1_correct);
    }
    Ok(AccuracyMatrix::new(models.to_vec(), meshes.to_vec(), &cells, CellReduce::Mean)?)
}
